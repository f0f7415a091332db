"""Probabilistic output layer: tempered Monte Carlo class probabilities.

A Gaussian with per-class mean and scale is placed over the logits of a
classifier.  Class probabilities are estimated by drawing standard-normal
perturbations, pushing each perturbed logit vector through a
temperature-scaled softmax (or per-class sigmoid), and averaging.  The
spread of the per-draw probabilities is the aleatoric uncertainty of the
prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr

from .errors import InvalidConfig, InvalidInput
from .rng import TAG_HEAD, normal_field

MULTICLASS = "multiclass"
MULTILABEL = "multilabel"


@dataclass(frozen=True)
class LogitDistribution:
    """Per-class Gaussian over logits: independent N(mean_c, scale_c^2)."""

    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        scales = np.asarray(self.scales, dtype=np.float64)
        if means.ndim != 1 or scales.shape != means.shape or means.size < 1:
            raise InvalidInput(
                f"means and scales must be equal-length vectors, got shapes "
                f"{means.shape} and {scales.shape}"
            )
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(scales))):
            raise InvalidInput("logit means/scales must be finite")
        if np.any(scales < 0):
            raise InvalidInput("logit scales must be nonnegative")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scales", scales)

    @property
    def num_classes(self) -> int:
        return self.means.size


@dataclass(frozen=True)
class MCConfig:
    """Temperature, sample count, and seed for every stochastic forward pass."""

    temperature: float = 1.0
    num_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.temperature) or self.temperature <= 0:
            raise InvalidConfig(f"temperature must be positive, got {self.temperature}")
        if int(self.num_samples) < 1:
            raise InvalidConfig(f"num_samples must be >= 1, got {self.num_samples}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig("seed must fit in an unsigned 64-bit integer")


@dataclass
class ProbOutput:
    """Monte Carlo estimate of class probabilities and their spread.

    ``aleatoric`` is the population variance of the per-draw
    probabilities, one value per class.  ``per_sample_probs`` (S x K) is
    retained only when requested.
    """

    mean_probs: np.ndarray
    aleatoric: np.ndarray
    per_sample_probs: np.ndarray | None = field(default=None, repr=False)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis with max subtraction."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically safe logistic function."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def mc_probs(
    means: np.ndarray,
    scales: np.ndarray,
    temperature: float,
    draws: np.ndarray,
    mode: str = MULTICLASS,
) -> np.ndarray:
    """Per-draw class probabilities for batched inputs.

    means/scales have shape (..., K) and draws (..., S, K); the result is
    (..., S, K).  Multiclass rows are normalized per draw; multilabel
    classes are squashed independently.
    """
    u = means[..., None, :] + scales[..., None, :] * draws
    u /= temperature
    if mode == MULTICLASS:
        return softmax_rows(u)
    if mode == MULTILABEL:
        return sigmoid(u)
    raise InvalidConfig(f"unknown head mode {mode!r}")


def _summarize(per_draw: np.ndarray, keep_samples: bool) -> ProbOutput:
    mean = per_draw.mean(axis=0)
    var = np.mean((per_draw - mean) ** 2, axis=0)
    return ProbOutput(
        mean_probs=mean,
        aleatoric=var,
        per_sample_probs=per_draw if keep_samples else None,
    )


def _resolve_draws(dist: LogitDistribution, cfg: MCConfig, draws: np.ndarray | None) -> np.ndarray:
    if draws is None:
        return normal_field((cfg.num_samples, dist.num_classes), cfg.seed, TAG_HEAD)
    draws = np.asarray(draws, dtype=np.float64)
    if draws.ndim != 2 or draws.shape[1] != dist.num_classes:
        raise InvalidInput(f"draws must have shape (S, {dist.num_classes}), got {draws.shape}")
    if not np.all(np.isfinite(draws)):
        raise InvalidInput("draws must be finite")
    return draws


def tempered_mc_softmax(
    dist: LogitDistribution,
    cfg: MCConfig,
    draws: np.ndarray | None = None,
    keep_samples: bool = False,
) -> ProbOutput:
    """Tempered Monte Carlo softmax probabilities with aleatoric spread.

    Each draw perturbs the logits by scale-weighted standard normals,
    divides by the temperature, and is softmaxed; the S per-draw
    probability rows are then averaged.  Deterministic given
    ``(dist, cfg, draws)``; when ``draws`` is omitted they come from the
    counter stream keyed by ``cfg.seed``.
    """
    mu = _resolve_draws(dist, cfg, draws)
    per_draw = mc_probs(dist.means, dist.scales, cfg.temperature, mu, MULTICLASS)
    return _summarize(per_draw, keep_samples)


def tempered_mc_sigmoid(
    dist: LogitDistribution,
    cfg: MCConfig,
    draws: np.ndarray | None = None,
    keep_samples: bool = False,
) -> ProbOutput:
    """Per-class Bernoulli analogue of :func:`tempered_mc_softmax`.

    Classes are squashed independently, so rows carry no sum constraint.
    """
    mu = _resolve_draws(dist, cfg, draws)
    per_draw = mc_probs(dist.means, dist.scales, cfg.temperature, mu, MULTILABEL)
    return _summarize(per_draw, keep_samples)


def aleatoric_summary(out: ProbOutput, predicted_class: int) -> float:
    """Scalar uncertainty attached to a prediction: spread at the chosen class."""
    k = out.aleatoric.shape[0]
    if not 0 <= predicted_class < k:
        raise IndexError(f"predicted_class {predicted_class} out of range for K={k}")
    return float(out.aleatoric[predicted_class])


def gaussian_argmax_prob(dist: LogitDistribution) -> np.ndarray:
    """Exact P(argmax_k u_k = c) for independent u_k ~ N(mean_k, scale_k^2).

    Closed form for K=2; one-dimensional adaptive quadrature of

        integral  phi((t - m_c)/s_c)/s_c * prod_{k != c} Phi((t - m_k)/s_k) dt

    for larger K.  A class with zero scale contributes a step factor.
    With every scale zero the argmax is deterministic and ties split
    uniformly.
    """
    m, s = dist.means, dist.scales
    k = dist.num_classes

    if k == 1:
        return np.array([1.0])

    if np.all(s == 0):
        top = m.max()
        winners = m == top
        return winners / winners.sum()

    if k == 2:
        z = (m[0] - m[1]) / np.hypot(s[0], s[1])
        p0 = float(ndtr(z))
        return np.array([p0, 1.0 - p0])

    probs = np.empty(k)
    for c in range(k):
        probs[c] = _argmax_prob_one_class(m, s, c)
    return probs


def _argmax_prob_one_class(m: np.ndarray, s: np.ndarray, c: int) -> float:
    others = [j for j in range(m.size) if j != c]
    det = [j for j in others if s[j] == 0]
    sto = [j for j in others if s[j] > 0]

    if s[c] == 0:
        # u_c is the point mass at m[c]; competitors must fall below it.
        p = 1.0
        for j in det:
            if m[j] > m[c]:
                return 0.0
            if m[j] == m[c]:
                p *= 0.5
        for j in sto:
            p *= ndtr((m[c] - m[j]) / s[j])
        return float(p)

    # u_c has a density; deterministic competitors only truncate the range.
    lo = max((m[j] for j in det), default=-np.inf)
    inv = 1.0 / s[c]
    norm_const = 1.0 / np.sqrt(2.0 * np.pi)

    def integrand(t: float) -> float:
        z = (t - m[c]) * inv
        val = norm_const * inv * np.exp(-0.5 * z * z)
        for j in sto:
            val *= ndtr((t - m[j]) / s[j])
        return val

    val, _ = quad(integrand, lo, np.inf, epsabs=1e-11, epsrel=1e-10, limit=200)
    return float(val)
