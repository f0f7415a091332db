"""Dense feed-forward classifier with a probabilistic head.

The final layer emits 2K values for probabilistic heads: K raw logit
means and K raw scale pre-activations mapped through softplus plus a
small floor.  Training minimizes the Monte Carlo estimate of the loss
with pathwise gradients: noise draws are held fixed across a
forward/backward pair so the gradient flows through means and scales.
A deterministic head (plain softmax or sigmoid on K outputs) serves as
the baseline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidConfig, InvalidInput, TrainingFailure
from .probhead import (
    MCConfig,
    MULTICLASS,
    MULTILABEL,
    ProbOutput,
    mc_probs,
    sigmoid,
    softmax_rows,
)
from .rng import TAG_HEAD, TAG_INIT, TAG_PREDICT, TAG_SHUFFLE, TAG_STEP, generator, normal_field

DETERMINISTIC = "deterministic"
HEAD_MODES = (MULTICLASS, MULTILABEL, DETERMINISTIC)
ACTIVATIONS = ("relu", "tanh")

MODEL_FORMAT_VERSION = 1
SIGMA_MIN = 1e-6
EPS_P = 1e-12  # probability clamp applied before logarithms
PREDICT_CHUNK = 256


@dataclass
class HetModel:
    """Layer dimensions, weights, and head configuration.

    ``layer_dims`` runs input -> hidden... -> output width, where the
    output width is 2K for probabilistic heads and K for the
    deterministic head.  Models are treated as immutable once trained;
    ``fit`` returns a new instance.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str
    head_mode: str
    mc_config: MCConfig
    scale_transform: str = "softplus_plus_eps"
    sigma_min: float = SIGMA_MIN

    def __post_init__(self):
        if self.head_mode not in HEAD_MODES:
            raise InvalidConfig(f"unknown head_mode {self.head_mode!r}")
        if self.activation not in ACTIVATIONS:
            raise InvalidConfig(f"unknown activation {self.activation!r}")
        if self.scale_transform != "softplus_plus_eps":
            raise InvalidConfig(f"unknown scale_transform {self.scale_transform!r}")
        if len(self.layer_dims) < 2 or any(d < 1 for d in self.layer_dims):
            raise InvalidConfig(f"bad layer_dims {self.layer_dims}")
        out = self.layer_dims[-1]
        if self.head_mode != DETERMINISTIC and out % 2 != 0:
            raise InvalidConfig(f"probabilistic head needs an even output width, got {out}")

    @property
    def num_classes(self) -> int:
        out = self.layer_dims[-1]
        return out if self.head_mode == DETERMINISTIC else out // 2

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]


@dataclass
class TrainConfig:
    """Hyperparameters for :func:`fit`."""

    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 10
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    train_mc_samples: int | None = None  # None: reuse the model's MC sample count

    def __post_init__(self):
        if self.learning_rate < 0 or not np.isfinite(self.learning_rate):
            raise InvalidConfig(f"learning_rate must be finite and >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise InvalidConfig(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs < 1:
            raise InvalidConfig(f"epochs must be >= 1, got {self.epochs}")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidConfig(f"unknown optimizer {self.optimizer!r}")
        if self.train_mc_samples is not None and self.train_mc_samples < 1:
            raise InvalidConfig("train_mc_samples must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig("seed must fit in an unsigned 64-bit integer")


def init_model(
    layer_dims: list[int],
    head_mode: str,
    activation: str = "relu",
    mc_config: MCConfig | None = None,
    seed: int = 0,
) -> HetModel:
    """Seeded weight initialization (He for relu, Xavier for tanh).

    The biases feeding the scale branch start at -2 so predicted scales
    begin near softplus(-2) ~ 0.13 and grow only where noise pays off.
    """
    mc_config = mc_config if mc_config is not None else MCConfig()
    weights, biases = [], []
    for layer, (nin, nout) in enumerate(zip(layer_dims[:-1], layer_dims[1:])):
        rng = generator(seed, TAG_INIT, layer)
        gain = np.sqrt(2.0 / nin) if activation == "relu" else np.sqrt(1.0 / nin)
        weights.append(rng.standard_normal((nin, nout)) * gain)
        biases.append(np.zeros(nout))
    model = HetModel(
        layer_dims=list(layer_dims),
        weights=weights,
        biases=biases,
        activation=activation,
        head_mode=head_mode,
        mc_config=mc_config,
    )
    if head_mode != DETERMINISTIC:
        model.biases[-1][model.num_classes:] = -2.0
    return model


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _act_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    return (z > 0).astype(np.float64) if kind == "relu" else 1.0 - a * a


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _affine_forward(model: HetModel, x: np.ndarray):
    """Runs the dense stack; returns raw outputs plus per-layer caches."""
    a = x
    acts = [x]
    pres = []
    last = len(model.weights) - 1
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pres.append(z)
        if layer < last:
            a = _act(z, model.activation)
            acts.append(a)
    raw = pres[-1]
    if not np.all(np.isfinite(raw)):
        raise TrainingFailure("non-finite activations in forward pass", where="output layer")
    return raw, acts, pres


def _head_distribution(model: HetModel, raw: np.ndarray):
    """Splits raw outputs into logit means and softplus-floored scales."""
    k = model.num_classes
    means = raw[..., :k]
    raw_scales = raw[..., k:]
    scales = softplus(raw_scales) + model.sigma_min
    return means, raw_scales, scales


def _det_probs(raw: np.ndarray, task: str) -> np.ndarray:
    return softmax_rows(raw) if task == MULTICLASS else sigmoid(raw)


def forward(
    model: HetModel,
    features: np.ndarray,
    draws: np.ndarray | None = None,
    keep_samples: bool = False,
    task: str = MULTICLASS,
) -> ProbOutput:
    """Probabilities and aleatoric spread for a single feature vector.

    ``task`` picks softmax vs sigmoid for the deterministic head only;
    probabilistic heads carry their own mode.  Deterministic given the
    model and its MC seed.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.input_dim:
        raise InvalidInput(f"expected {model.input_dim} features, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("features must be finite")

    raw, _, _ = _affine_forward(model, x[None, :])
    if model.head_mode == DETERMINISTIC:
        probs = _det_probs(raw, task)[0]
        return ProbOutput(mean_probs=probs, aleatoric=np.zeros_like(probs))

    means, _, scales = _head_distribution(model, raw)
    cfg = model.mc_config
    if draws is None:
        draws = normal_field((cfg.num_samples, model.num_classes), cfg.seed, TAG_HEAD)
    per_draw = mc_probs(means[0], scales[0], cfg.temperature, draws, model.head_mode)
    mean = per_draw.mean(axis=0)
    var = np.mean((per_draw - mean) ** 2, axis=0)
    return ProbOutput(mean, var, per_draw if keep_samples else None)


def loss(out: ProbOutput, label, head_mode: str) -> float:
    """Negative log likelihood of the label under the mean probabilities.

    Multiclass: -log p[label].  Multilabel: summed binary cross-entropy
    over classes.  The deterministic head dispatches on the label type.
    Probabilities are clamped away from {0, 1} before the logarithm.
    """
    p = np.clip(out.mean_probs, EPS_P, 1.0 - EPS_P)
    k = p.shape[0]
    if head_mode == DETERMINISTIC:
        head_mode = MULTICLASS if np.ndim(label) == 0 else MULTILABEL
    if head_mode == MULTICLASS:
        idx = int(label)
        if not 0 <= idx < k:
            raise InvalidInput(f"label {idx} out of range for K={k}")
        return float(-np.log(p[idx]))
    y = np.asarray(label, dtype=np.float64)
    if y.shape != (k,) or np.any((y != 0) & (y != 1)):
        raise InvalidInput(f"multilabel target must be a {k}-vector of 0/1")
    return float(-np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _clamped_log_grad(pbar: np.ndarray):
    """Mean probabilities clamped for the log, plus the pass-through mask."""
    clamped = np.clip(pbar, EPS_P, 1.0 - EPS_P)
    inside = (pbar > EPS_P) & (pbar < 1.0 - EPS_P)
    return clamped, inside.astype(np.float64)


def _batch_loss_and_upstream(model: HetModel, pbar: np.ndarray, labels, task: str):
    """Mean batch loss and dLoss/dMeanProbs, honoring the clamp."""
    b, k = pbar.shape
    clamped, inside = _clamped_log_grad(pbar)
    g = np.zeros_like(pbar)
    if task == MULTICLASS:
        idx = np.asarray(labels, dtype=np.intp)
        if idx.shape != (b,) or idx.min() < 0 or idx.max() >= k:
            raise InvalidInput("labels out of range for batch")
        picked = clamped[np.arange(b), idx]
        total = float(-np.log(picked).mean())
        g[np.arange(b), idx] = -1.0 / picked
        g *= inside
        g /= b
    else:
        y = np.asarray(labels, dtype=np.float64)
        if y.shape != (b, k):
            raise InvalidInput(f"multilabel batch targets must be (B, {k})")
        total = float(-np.mean(np.sum(y * np.log(clamped) + (1 - y) * np.log(1 - clamped), axis=1)))
        g = (-y / clamped + (1.0 - y) / (1.0 - clamped)) * inside / b
    return total, g


def _zero_grads(model: HetModel):
    return (
        [np.zeros_like(w) for w in model.weights],
        [np.zeros_like(b) for b in model.biases],
    )


def _backprop_affine(model: HetModel, acts, pres, d_raw):
    d_w, d_b = _zero_grads(model)
    d_z = d_raw
    for layer in range(len(model.weights) - 1, -1, -1):
        d_w[layer] = acts[layer].T @ d_z
        d_b[layer] = d_z.sum(axis=0)
        if layer > 0:
            d_a = d_z @ model.weights[layer].T
            d_z = d_a * _act_grad(pres[layer - 1], acts[layer], model.activation)
    return d_w, d_b


def batch_loss_and_grads(
    model: HetModel,
    features: np.ndarray,
    labels,
    draws: np.ndarray | None,
    task: str = MULTICLASS,
):
    """Mean loss over a batch and its gradients w.r.t. every parameter.

    For probabilistic heads, ``draws`` (B, S, K) must be the same noise
    used for the forward value so the pathwise estimator is exact.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise InvalidInput(f"expected batch of {model.input_dim}-dim features, got {x.shape}")
    if x.shape[0] == 0:
        raise InvalidInput("batch is empty")

    raw, acts, pres = _affine_forward(model, x)
    b, k = x.shape[0], model.num_classes

    if model.head_mode == DETERMINISTIC:
        head_task = MULTICLASS if np.ndim(labels) == 1 else MULTILABEL
        pbar = _det_probs(raw, head_task)
        total, g = _batch_loss_and_upstream(model, pbar, labels, head_task)
        if head_task == MULTICLASS:
            dot = np.sum(g * pbar, axis=1, keepdims=True)
            d_raw = pbar * (g - dot)
        else:
            d_raw = g * pbar * (1.0 - pbar)
        d_w, d_b = _backprop_affine(model, acts, pres, d_raw)
        return total, d_w, d_b

    if draws is None:
        s = model.mc_config.num_samples
        draws = normal_field((b, s, k), model.mc_config.seed, TAG_STEP, 0)
    draws = np.asarray(draws, dtype=np.float64)
    if draws.shape[0] != b or draws.shape[2] != k:
        raise InvalidInput(f"draws must be (B, S, {k}), got {draws.shape}")
    s = draws.shape[1]

    means, raw_scales, scales = _head_distribution(model, raw)
    tau = model.mc_config.temperature
    per_draw = mc_probs(means, scales, tau, draws, model.head_mode)
    pbar = per_draw.mean(axis=1)
    total, g = _batch_loss_and_upstream(model, pbar, labels, model.head_mode)

    if model.head_mode == MULTICLASS:
        gp = per_draw * g[:, None, :]
        dot = gp.sum(axis=2, keepdims=True)
        d_a = (gp - per_draw * dot) / s
    else:
        d_a = g[:, None, :] * per_draw * (1.0 - per_draw) / s

    d_means = d_a.sum(axis=1) / tau
    d_scales = np.sum(d_a * draws, axis=1) / tau
    d_raw_scales = d_scales * sigmoid(raw_scales)
    d_raw = np.concatenate([d_means, d_raw_scales], axis=1)
    d_w, d_b = _backprop_affine(model, acts, pres, d_raw)
    return total, d_w, d_b


def grad(model: HetModel, features: np.ndarray, labels, draws: np.ndarray | None = None):
    """Gradients of the mean batch loss; raises on non-finite values."""
    total, d_w, d_b = batch_loss_and_grads(model, features, labels, draws)
    if not np.isfinite(total):
        raise TrainingFailure("non-finite loss", where="batch loss")
    for layer, (gw, gb) in enumerate(zip(d_w, d_b)):
        if not np.all(np.isfinite(gw)):
            raise TrainingFailure("non-finite gradient", where=f"layer {layer} weights")
        if not np.all(np.isfinite(gb)):
            raise TrainingFailure("non-finite gradient", where=f"layer {layer} biases")
    return total, d_w, d_b


class _Adam:
    def __init__(self, shapes_w, shapes_b, cfg: TrainConfig):
        self.cfg = cfg
        self.m_w = [np.zeros(s) for s in shapes_w]
        self.v_w = [np.zeros(s) for s in shapes_w]
        self.m_b = [np.zeros(s) for s in shapes_b]
        self.v_b = [np.zeros(s) for s in shapes_b]
        self.t = 0

    def step(self, weights, biases, d_w, d_b):
        c = self.cfg
        self.t += 1
        corr1 = 1.0 - c.beta1**self.t
        corr2 = 1.0 - c.beta2**self.t
        for i in range(len(weights)):
            for p, g, m, v in (
                (weights[i], d_w[i], self.m_w[i], self.v_w[i]),
                (biases[i], d_b[i], self.m_b[i], self.v_b[i]),
            ):
                m *= c.beta1
                m += (1 - c.beta1) * g
                v *= c.beta2
                v += (1 - c.beta2) * g * g
                p -= c.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + c.adam_eps)


def fit(model: HetModel, train_set, cfg: TrainConfig):
    """Minibatch training; returns the trained model and a per-epoch log.

    Deterministic given ``cfg.seed``: shuffling and the per-step noise
    draws come from counter streams keyed by (seed, epoch) and
    (seed, step).  Raises :class:`TrainingFailure` the moment a loss,
    gradient, or parameter goes non-finite.
    """
    x = np.asarray(train_set.features, dtype=np.float64)
    labels = train_set.noisy_labels
    n = x.shape[0]
    if n == 0:
        raise InvalidInput("training set is empty")
    if x.shape[1] != model.input_dim:
        raise InvalidInput(
            f"dataset feature width {x.shape[1]} != model input {model.input_dim}"
        )

    trained = replace(
        model,
        weights=[w.copy() for w in model.weights],
        biases=[b.copy() for b in model.biases],
    )
    s_train = cfg.train_mc_samples or model.mc_config.num_samples
    k = model.num_classes
    adam = _Adam([w.shape for w in trained.weights], [b.shape for b in trained.biases], cfg)

    log = []
    step = 0
    for epoch in range(cfg.epochs):
        order = generator(cfg.seed, TAG_SHUFFLE, epoch).permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb = x[idx]
            yb = labels[idx]
            draws = None
            if trained.head_mode != DETERMINISTIC:
                draws = normal_field((len(idx), s_train, k), cfg.seed, TAG_STEP, step)
            batch_loss, d_w, d_b = grad(trained, xb, yb, draws)
            if cfg.optimizer == "adam":
                adam.step(trained.weights, trained.biases, d_w, d_b)
            else:
                for i in range(len(trained.weights)):
                    trained.weights[i] -= cfg.learning_rate * d_w[i]
                    trained.biases[i] -= cfg.learning_rate * d_b[i]
            for layer, (w, b) in enumerate(zip(trained.weights, trained.biases)):
                if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                    raise TrainingFailure("non-finite parameter after update", where=f"layer {layer}")
            loss_sum += batch_loss * len(idx)
            step += 1
        log.append({"epoch": epoch, "train_loss": loss_sum / n})
    return trained, log


def predict_dataset(model: HetModel, data, cfg: MCConfig | None = None, against: str = "noisy"):
    """Mean probabilities, labels, and uncertainty for every sample.

    The scalar uncertainty is the aleatoric spread at the predicted
    class (multiclass) or its maximum over classes (multilabel).  Noise
    draws are keyed per sample index, so results do not depend on how
    the dataset is chunked internally.
    """
    from .evaluation import PredictionSet  # local import: evaluation never imports us

    x = np.asarray(data.features, dtype=np.float64)
    n = x.shape[0]
    if x.shape[1] != model.input_dim:
        raise InvalidInput(
            f"dataset feature width {x.shape[1]} != model input {model.input_dim}"
        )
    if against not in ("noisy", "clean"):
        raise InvalidConfig(f"against must be 'noisy' or 'clean', got {against!r}")
    if against == "clean" and data.clean_labels is None:
        raise InvalidInput("dataset carries no clean labels")

    mc = cfg if cfg is not None else model.mc_config
    k = model.num_classes
    task = data.head_mode if model.head_mode == DETERMINISTIC else model.head_mode

    probs = np.empty((n, k))
    aleatoric = np.zeros((n, k))
    for start in range(0, n, PREDICT_CHUNK):
        stop = min(start + PREDICT_CHUNK, n)
        raw, _, _ = _affine_forward(model, x[start:stop])
        if model.head_mode == DETERMINISTIC:
            probs[start:stop] = _det_probs(raw, task)
            continue
        means, _, scales = _head_distribution(model, raw)
        draws = np.stack(
            [normal_field((mc.num_samples, k), mc.seed, TAG_PREDICT, i) for i in range(start, stop)]
        )
        per_draw = mc_probs(means, scales, mc.temperature, draws, model.head_mode)
        pbar = per_draw.mean(axis=1)
        probs[start:stop] = pbar
        aleatoric[start:stop] = np.mean((per_draw - pbar[:, None, :]) ** 2, axis=1)

    if task == MULTICLASS:
        pred_labels = probs.argmax(axis=1)
        uncertainty = aleatoric[np.arange(n), pred_labels]
    else:
        pred_labels = (probs > 0.5).astype(np.int64)
        uncertainty = aleatoric.max(axis=1)

    target = data.clean_labels if against == "clean" else data.noisy_labels
    clamped = np.clip(probs, EPS_P, 1.0 - EPS_P)
    if task == MULTICLASS:
        losses = -np.log(clamped[np.arange(n), np.asarray(target, dtype=np.intp)])
    else:
        y = np.asarray(target, dtype=np.float64)
        losses = -np.sum(y * np.log(clamped) + (1 - y) * np.log(1 - clamped), axis=1)

    return PredictionSet(
        probs=probs,
        pred_labels=pred_labels,
        uncertainty=uncertainty,
        aleatoric=aleatoric,
        target_labels=np.asarray(target),
        noisy_labels=np.asarray(data.noisy_labels),
        clean_labels=None if data.clean_labels is None else np.asarray(data.clean_labels),
        losses=losses,
        task=task,
        against=against,
    )


def model_to_dict(model: HetModel) -> dict:
    """Versioned JSON-ready form; weights flattened row-major per layer."""
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "head_mode": model.head_mode,
        "layer_dims": list(model.layer_dims),
        "activation": model.activation,
        "scale_transform": model.scale_transform,
        "sigma_min": model.sigma_min,
        "mc_config": {
            "temperature": model.mc_config.temperature,
            "num_samples": model.mc_config.num_samples,
            "seed": model.mc_config.seed,
        },
        "layers": [
            {"weights": w.ravel(order="C").tolist(), "bias": b.tolist()}
            for w, b in zip(model.weights, model.biases)
        ],
    }


def model_from_dict(doc: dict) -> HetModel:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise InvalidInput(f"unsupported model format_version {doc.get('format_version')!r}")
    dims = [int(d) for d in doc["layer_dims"]]
    weights, biases = [], []
    for (nin, nout), layer in zip(zip(dims[:-1], dims[1:]), doc["layers"]):
        weights.append(np.asarray(layer["weights"], dtype=np.float64).reshape(nin, nout))
        biases.append(np.asarray(layer["bias"], dtype=np.float64))
    mc = doc["mc_config"]
    return HetModel(
        layer_dims=dims,
        weights=weights,
        biases=biases,
        activation=doc["activation"],
        head_mode=doc["head_mode"],
        mc_config=MCConfig(
            temperature=mc["temperature"],
            num_samples=int(mc["num_samples"]),
            seed=int(mc["seed"]),
        ),
        scale_transform=doc["scale_transform"],
        sigma_min=float(doc["sigma_min"]),
    )


def save_model(model: HetModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path) -> HetModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
