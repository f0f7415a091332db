"""Predictive metrics and uncertainty-reliability evaluation.

Covers F1 and area under the precision-recall curve for predictive
quality, the discard test (progressively dropping the most uncertain
predictions and tracking the remaining loss) for uncertainty ranking
quality, uncertainty density summaries split by correctness, and the
rank correlation between predicted uncertainty and the generator's
ground-truth noise scales.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .errors import InvalidInput, UndefinedMetric

REPORT_FORMAT_VERSION = 1
DENSITY_BINS = 50
NUM_DISCARD_FRACTIONS = 10


@dataclass
class PredictionSet:
    """Per-sample predictions, uncertainties, and reference labels.

    ``losses`` were computed against ``target_labels`` (the noisy or the
    clean ones, per ``against``).  ``aleatoric`` keeps the full per-class
    spread so multilabel densities can be computed per label cell.
    """

    probs: np.ndarray
    pred_labels: np.ndarray
    uncertainty: np.ndarray
    aleatoric: np.ndarray
    target_labels: np.ndarray
    noisy_labels: np.ndarray
    clean_labels: np.ndarray | None
    losses: np.ndarray
    task: str = "multiclass"
    against: str = "noisy"

    def __post_init__(self):
        n = self.probs.shape[0]
        for name in ("pred_labels", "uncertainty", "aleatoric", "target_labels", "noisy_labels", "losses"):
            arr = getattr(self, name)
            if arr.shape[0] != n:
                raise InvalidInput(f"{name} has {arr.shape[0]} rows, expected {n}")
        if not np.all(np.isfinite(self.uncertainty)) or np.any(self.uncertainty < 0):
            raise InvalidInput("uncertainties must be finite and nonnegative")

    def __len__(self) -> int:
        return self.probs.shape[0]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[1]

    def correct_mask(self) -> np.ndarray:
        """Per-sample (or per-cell reduced) correctness vs. target labels."""
        hit = self.pred_labels == self.target_labels
        return hit if hit.ndim == 1 else hit.all(axis=1)


@dataclass
class DiscardCurve:
    """Retained-set errors at increasing discard fractions.

    ``mf`` is the fraction of consecutive steps where the error does not
    increase; ``di`` is the mean per-step error reduction.
    """

    fractions: list[float]
    errors: list[float]
    mf: float
    di: float

    def __post_init__(self):
        if len(self.fractions) != len(self.errors):
            raise InvalidInput("fractions and errors must have equal length")
        if np.any(np.diff(self.fractions) <= 0):
            raise InvalidInput("fractions must be strictly increasing")
        if not 0.0 <= self.mf <= 1.0:
            raise InvalidInput(f"mf must lie in [0, 1], got {self.mf}")


@dataclass
class GroupDensity:
    """Uncertainty values for one correctness group, with summary stats."""

    values: np.ndarray = field(repr=False)
    count: int
    median: float | None
    bin_edges: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "median": self.median,
            "histogram": {"bin_edges": self.bin_edges.tolist(), "counts": self.counts.tolist()},
        }


@dataclass
class DensitySummary:
    """Correct/incorrect uncertainty densities per scope.

    Scope keys: ``all`` plus ``class_<k>`` groupings; multilabel adds
    ``label_0``/``label_1`` (cells grouped by true label value) and the
    per-class variants thereof.
    """

    scopes: dict

    def to_dict(self) -> dict:
        return {
            scope: {group: gd.to_dict() for group, gd in groups.items()}
            for scope, groups in self.scopes.items()
        }


def default_fractions() -> list[float]:
    """Ten discard fractions 0.0, 0.1, ..., 0.9."""
    return [round(0.1 * i, 1) for i in range(NUM_DISCARD_FRACTIONS)]


def mf_di(errors) -> tuple[float, float]:
    """Monotonicity fraction and mean error reduction of an error sequence.

    MF counts the consecutive pairs where the error does not increase;
    DI is the average signed drop per step.
    """
    e = np.asarray(errors, dtype=np.float64)
    if e.size < 2:
        raise InvalidInput("need at least two error values")
    diffs = np.diff(e)
    return float(np.mean(diffs <= 0)), float(np.mean(-diffs))


def f1_score(pred_labels, true_labels, mode: str = "binary_positive") -> float:
    """F1 from pooled counts; 0 by convention when 2TP+FP+FN = 0.

    ``binary_positive`` scores class 1 of binary label vectors; ``micro``
    pools true/false positives and false negatives over every
    class-label pair (index labels or multi-hot matrices).
    """
    pred = np.asarray(pred_labels)
    true = np.asarray(true_labels)
    if pred.shape != true.shape:
        raise InvalidInput(f"shape mismatch: {pred.shape} vs {true.shape}")
    if pred.size == 0:
        raise InvalidInput("empty input")

    if mode == "binary_positive":
        if pred.ndim != 1:
            raise InvalidInput("binary_positive expects 1-D label vectors")
        tp = int(np.sum((pred == 1) & (true == 1)))
        fp = int(np.sum((pred == 1) & (true != 1)))
        fn = int(np.sum((pred != 1) & (true == 1)))
    elif mode == "micro":
        if pred.ndim == 1:
            classes = np.unique(np.concatenate([pred, true]))
            pred = (pred[:, None] == classes[None, :]).astype(np.int64)
            true = (true[:, None] == classes[None, :]).astype(np.int64)
        tp = int(np.sum((pred == 1) & (true == 1)))
        fp = int(np.sum((pred == 1) & (true == 0)))
        fn = int(np.sum((pred == 0) & (true == 1)))
    else:
        raise InvalidInput(f"unknown f1 mode {mode!r}")

    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2.0 * tp / denom


def auprc(scores, true_binary_labels) -> float:
    """Step-wise area under the precision-recall curve.

    Samples are ranked by descending score with equal scores processed
    as a single block; the area is sum over blocks of
    (recall increment) x (precision after the block).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(true_binary_labels)
    if s.shape != y.shape or s.ndim != 1:
        raise InvalidInput("scores and labels must be equal-length vectors")
    n_pos = int(np.sum(y == 1))
    if n_pos == 0:
        raise UndefinedMetric("AUPRC undefined without positive labels")

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = (y[order] == 1).astype(np.float64)

    # block boundaries: last index of each run of equal scores
    last_in_block = np.nonzero(np.diff(s_sorted) != 0)[0]
    boundaries = np.concatenate([last_in_block, [s.size - 1]])

    cum_tp = np.cumsum(y_sorted)[boundaries]
    retrieved = boundaries + 1.0
    precision = cum_tp / retrieved
    recall = cum_tp / n_pos
    recall_prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - recall_prev) * precision))


def discard_test(preds: PredictionSet, fractions: list[float] | None = None) -> DiscardCurve:
    """Drops the most uncertain predictions and tracks the remaining loss.

    At fraction q, ceil(q*N) samples with the highest uncertainty are
    removed (ties broken by ascending sample index) and the mean loss of
    the rest is recorded.
    """
    if len(preds) == 0:
        raise InvalidInput("empty predictions")
    fr = default_fractions() if fractions is None else [float(q) for q in fractions]
    if len(fr) < 2:
        raise InvalidInput("need at least two discard fractions")
    if any(q < 0 or q >= 1 for q in fr) or np.any(np.diff(fr) <= 0):
        raise InvalidInput(f"fractions must be strictly increasing within [0, 1), got {fr}")

    n = len(preds)
    # primary key: uncertainty descending; secondary: index ascending
    order = np.lexsort((np.arange(n), -preds.uncertainty))
    losses_ranked = preds.losses[order]

    errors = []
    for q in fr:
        drop = int(np.ceil(q * n))
        if drop >= n:
            raise InvalidInput(f"fraction {q} discards every sample")
        errors.append(float(losses_ranked[drop:].mean()))

    mf, di = mf_di(errors)
    return DiscardCurve(fractions=fr, errors=errors, mf=mf, di=di)


def _group_density(values: np.ndarray, bin_edges: np.ndarray) -> GroupDensity:
    counts, _ = np.histogram(values, bins=bin_edges)
    return GroupDensity(
        values=values,
        count=int(values.size),
        median=float(np.median(values)) if values.size else None,
        bin_edges=bin_edges,
        counts=counts,
    )


def _split_by_correctness(values, correct, bin_edges):
    return {
        "correct": _group_density(values[correct], bin_edges),
        "incorrect": _group_density(values[~correct], bin_edges),
    }


def density_summary(preds: PredictionSet, scope: str = "all") -> DensitySummary:
    """Uncertainty densities split by prediction correctness.

    ``scope="all"`` pools everything (plus, for multilabel, the
    label-value panels); ``scope="per_class"`` partitions by class.
    Histograms share 50 uniform bins spanning [0, max uncertainty].
    """
    if len(preds) == 0:
        raise InvalidInput("empty predictions")
    if scope not in ("all", "per_class"):
        raise InvalidInput(f"scope must be 'all' or 'per_class', got {scope!r}")

    k = preds.num_classes
    multilabel = preds.task == "multilabel"
    if multilabel:
        values = preds.aleatoric.ravel()
        correct = (preds.pred_labels == preds.target_labels).ravel()
        truth = np.asarray(preds.target_labels).ravel()
        class_of = np.tile(np.arange(k), len(preds))
    else:
        values = preds.uncertainty
        correct = preds.correct_mask()
        truth = np.asarray(preds.target_labels)
        class_of = truth

    hi = float(values.max())
    bin_edges = np.linspace(0.0, hi if hi > 0 else 1.0, DENSITY_BINS + 1)

    scopes = {}
    if scope == "all":
        scopes["all"] = _split_by_correctness(values, correct, bin_edges)
        if multilabel:
            for val in (0, 1):
                mask = truth == val
                scopes[f"label_{val}"] = _split_by_correctness(values[mask], correct[mask], bin_edges)
    else:
        for c in range(k):
            mask = class_of == c
            scopes[f"class_{c}"] = _split_by_correctness(values[mask], correct[mask], bin_edges)
            if multilabel:
                for val in (0, 1):
                    sub = mask & (truth == val)
                    scopes[f"class_{c}_label_{val}"] = _split_by_correctness(
                        values[sub], correct[sub], bin_edges
                    )
    return DensitySummary(scopes=scopes)


def sigma_oracle_correlation(preds: PredictionSet, dataset) -> float:
    """Spearman rank correlation of predicted uncertainty vs. true noise.

    The ground-truth magnitude per sample is the max over classes of the
    generator's recorded scales.
    """
    truth = np.asarray(dataset.true_scales, dtype=np.float64).max(axis=1)
    unc = preds.uncertainty
    if truth.shape[0] != unc.shape[0]:
        raise InvalidInput("prediction and dataset sample counts differ")
    if np.all(truth == truth[0]) or np.all(unc == unc[0]):
        raise UndefinedMetric("Spearman correlation undefined for constant inputs")
    rho = spearmanr(unc, truth).statistic
    return float(rho)


def build_report(
    preds: PredictionSet,
    dataset=None,
    fractions: list[float] | None = None,
) -> dict:
    """Assembles the full evaluation report as a JSON-ready dict."""
    k = preds.num_classes
    target = np.asarray(preds.target_labels)

    if preds.task == "multiclass" and k == 2:
        f1 = f1_score(preds.pred_labels, target, mode="binary_positive")
        pr_scores = preds.probs[:, 1]
        pr_labels = target
    else:
        f1 = f1_score(preds.pred_labels, target, mode="micro")
        if preds.task == "multiclass":
            onehot = (target[:, None] == np.arange(k)[None, :]).astype(np.int64)
            pr_scores, pr_labels = preds.probs.ravel(), onehot.ravel()
        else:
            pr_scores, pr_labels = preds.probs.ravel(), target.ravel()

    metrics = {"f1": f1, "auprc": auprc(pr_scores, pr_labels)}
    if dataset is not None and dataset.true_scales is not None:
        try:
            metrics["sigma_spearman"] = sigma_oracle_correlation(preds, dataset)
        except UndefinedMetric:
            metrics["sigma_spearman"] = None

    curve = discard_test(preds, fractions)
    densities = density_summary(preds, scope="all").scopes | density_summary(preds, scope="per_class").scopes

    return {
        "format_version": REPORT_FORMAT_VERSION,
        "metrics": metrics,
        "discard": {
            "fractions": curve.fractions,
            "errors": curve.errors,
            "mf": curve.mf,
            "di": curve.di,
        },
        "densities": DensitySummary(scopes=densities).to_dict(),
    }


def discard_csv(curve: DiscardCurve) -> str:
    """Plot-ready CSV of the discard curve."""
    lines = ["fraction,error"]
    lines += [f"{q!r},{e!r}" for q, e in zip(curve.fractions, curve.errors)]
    return "\n".join(lines) + "\n"


def densities_csv(summary: DensitySummary) -> str:
    """Plot-ready CSV of density histograms (one row per scope/group/bin)."""
    lines = ["scope,group,bin_left,bin_right,count"]
    for scope, groups in summary.scopes.items():
        for group, gd in groups.items():
            for left, right, count in zip(gd.bin_edges[:-1], gd.bin_edges[1:], gd.counts):
                lines.append(f"{scope},{group},{left!r},{right!r},{int(count)}")
    return "\n".join(lines) + "\n"
