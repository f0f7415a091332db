"""Synthetic noisy-label datasets with a ground-truth noise oracle.

Clean tasks are Gaussian-blob mixtures whose exact class logits are
known in closed form.  Labels are then corrupted by the same latent
process the probabilistic head models: perturb each true logit by a
per-class Gaussian of known scale and re-take the argmax.  The per
sample, per class scales used for corruption are recorded so learned
uncertainties can be validated against the truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig, InvalidInput
from .rng import TAG_CORRUPT, TAG_SPLIT, TAG_TASK, generator, normal_field

DATASET_FORMAT_VERSION = 1
SPLIT_TAGS = ("train", "val", "test")

# Noise profile kinds, each mimicking one family of real labeling error:
# indiscriminate annotation error, ambiguity concentrated in a confusable
# region, an inherently random outcome for one class, and error that grows
# toward the class boundary.
UNIFORM_FLIP = "uniform_flip"
REGION_AMBIGUITY = "region_ambiguity"
STOCHASTIC_EVENT = "stochastic_event"
BOUNDARY_MISALIGNMENT = "boundary_misalignment"
PROFILE_KINDS = (UNIFORM_FLIP, REGION_AMBIGUITY, STOCHASTIC_EVENT, BOUNDARY_MISALIGNMENT)


@dataclass(frozen=True)
class NoiseProfile:
    """Named scale-field family mapping inputs to per-class noise scales.

    ``params`` holds the family's knobs: ``margin`` (region_ambiguity),
    ``width`` (boundary_misalignment), ``class_index`` (stochastic_event).
    """

    kind: str
    base_scale: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise InvalidConfig(f"unknown noise profile kind {self.kind!r}")
        if not np.isfinite(self.base_scale) or self.base_scale < 0:
            raise InvalidConfig(f"base_scale must be finite and >= 0, got {self.base_scale}")
        for key, val in self.params.items():
            if isinstance(val, (int, float)) and not np.isfinite(val):
                raise InvalidConfig(f"profile parameter {key}={val} is not finite")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "base_scale": self.base_scale, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, doc: dict) -> "NoiseProfile":
        return cls(kind=doc["kind"], base_scale=doc["base_scale"], params=dict(doc.get("params", {})))


@dataclass(frozen=True)
class CleanTask:
    """Gaussian-blob mixture with closed-form class logits.

    Blob c is an isotropic Gaussian N(center_c, blob_scale^2 I) with equal
    prior; the Bayes discriminant is affine in x and serves as the true
    logit function.
    """

    centers: np.ndarray  # (K, D)
    blob_scale: float

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=np.float64)
        if centers.ndim != 2 or not np.all(np.isfinite(centers)):
            raise InvalidConfig("centers must be a finite (K, D) matrix")
        if not np.isfinite(self.blob_scale) or self.blob_scale <= 0:
            raise InvalidConfig("degenerate covariance: blob_scale must be positive")
        object.__setattr__(self, "centers", centers)

    @property
    def num_classes(self) -> int:
        return self.centers.shape[0]

    def logits(self, features: np.ndarray) -> np.ndarray:
        """True class logits, one row per sample."""
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        inv_var = 1.0 / (self.blob_scale**2)
        return inv_var * (x @ self.centers.T) - 0.5 * inv_var * np.sum(self.centers**2, axis=1)

    def to_dict(self) -> dict:
        return {"centers": self.centers.tolist(), "blob_scale": self.blob_scale}


@dataclass
class NoisyDataset:
    """Features with clean labels, corrupted labels, and the noise oracle."""

    features: np.ndarray
    clean_labels: np.ndarray | None
    noisy_labels: np.ndarray
    true_scales: np.ndarray
    seed: int
    split_tag: str | None = None
    head_mode: str = "multiclass"
    profile: NoiseProfile | None = None

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise InvalidInput(f"features must be a nonempty (N, D) matrix, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidInput("features must be finite")
        scales = np.asarray(self.true_scales, dtype=np.float64)
        if scales.shape[0] != x.shape[0] or not np.all(np.isfinite(scales)) or np.any(scales < 0):
            raise InvalidInput("true_scales must be finite, nonnegative, one row per sample")
        if self.split_tag is not None and self.split_tag not in SPLIT_TAGS:
            raise InvalidInput(f"split_tag must be one of {SPLIT_TAGS}, got {self.split_tag!r}")
        noisy = np.asarray(self.noisy_labels)
        if self.clean_labels is not None:
            clean = np.asarray(self.clean_labels)
            disagree = noisy != clean
            if disagree.ndim > 1:
                disagree = disagree.any(axis=1)
            if np.any(~scales.any(axis=1) & disagree):
                raise InvalidInput("noisy and clean labels must agree where the noise scale is zero")
            self.clean_labels = clean
        self.features = x
        self.true_scales = scales
        self.noisy_labels = noisy

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def num_classes(self) -> int:
        return self.true_scales.shape[1]

    def subset(self, indices: np.ndarray, split_tag: str | None = None) -> "NoisyDataset":
        return NoisyDataset(
            features=self.features[indices].copy(),
            clean_labels=None if self.clean_labels is None else self.clean_labels[indices].copy(),
            noisy_labels=self.noisy_labels[indices].copy(),
            true_scales=self.true_scales[indices].copy(),
            seed=self.seed,
            split_tag=split_tag if split_tag is not None else self.split_tag,
            head_mode=self.head_mode,
            profile=self.profile,
        )


@dataclass
class GeneratedTask:
    """Output of :func:`make_clean_task`: samples plus the generating truth."""

    features: np.ndarray
    clean_labels: np.ndarray
    blob_ids: np.ndarray
    task: CleanTask


def make_clean_task(
    n: int,
    d: int,
    k: int,
    seed: int,
    separation: float = 4.0,
    blob_scale: float = 1.0,
) -> GeneratedTask:
    """Samples a k-blob mixture task with controllable class separation.

    Blob centers are random directions rescaled so the minimum pairwise
    distance equals ``separation``.  Clean labels are the argmax of the
    true logits, which matches the generating blob except in the overlap
    region.
    """
    if n < 1 or d < 1 or k < 1:
        raise InvalidInput(f"n, d, k must be >= 1, got {(n, d, k)}")
    if not np.isfinite(separation) or separation < 0:
        raise InvalidConfig(f"separation must be finite and >= 0, got {separation}")
    if not np.isfinite(blob_scale) or blob_scale <= 0:
        raise InvalidConfig("degenerate covariance: blob_scale must be positive")

    rng = generator(seed, TAG_TASK)
    centers = rng.standard_normal((k, d))
    if k > 1:
        diffs = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt(np.sum(diffs**2, axis=2))
        min_dist = dist[~np.eye(k, dtype=bool)].min()
        if min_dist == 0:
            raise InvalidConfig("degenerate blob centers (coincident)")
        centers *= separation / min_dist
    task = CleanTask(centers=centers, blob_scale=blob_scale)

    blob_ids = rng.integers(0, k, size=n)
    features = centers[blob_ids] + blob_scale * rng.standard_normal((n, d))
    clean = np.argmax(task.logits(features), axis=1)
    return GeneratedTask(features=features, clean_labels=clean, blob_ids=blob_ids, task=task)


def scale_field(logits: np.ndarray, profile: NoiseProfile) -> np.ndarray:
    """Per-sample, per-class noise scales for a profile, given true logits."""
    n, k = logits.shape
    base = profile.base_scale
    if profile.kind == UNIFORM_FLIP:
        return np.full((n, k), base)
    if profile.kind == STOCHASTIC_EVENT:
        idx = int(profile.params.get("class_index", 0))
        if not 0 <= idx < k:
            raise InvalidConfig(f"stochastic_event class_index {idx} out of range for K={k}")
        out = np.zeros((n, k))
        out[:, idx] = base
        return out

    top2 = np.sort(logits, axis=1)[:, -2:]
    gap = top2[:, 1] - top2[:, 0]
    if profile.kind == REGION_AMBIGUITY:
        margin = float(profile.params.get("margin", 1.0))
        return np.where(gap < margin, base, 0.0)[:, None] * np.ones((1, k))
    # boundary_misalignment: scale decays smoothly with distance from the boundary
    width = float(profile.params.get("width", 1.0))
    if width <= 0:
        raise InvalidConfig(f"boundary_misalignment width must be positive, got {width}")
    return (base * np.exp(-gap / width))[:, None] * np.ones((1, k))


def corrupt(
    features: np.ndarray,
    clean_labels: np.ndarray,
    f_true: CleanTask,
    profile: NoiseProfile,
    seed: int,
) -> NoisyDataset:
    """Corrupts labels by the latent-utility process.

    For every sample, each true logit is perturbed by an independent
    Gaussian of the profile's scale and the noisy label is the argmax of
    the perturbed vector.  The scales used are recorded as the oracle.
    """
    x = np.asarray(features, dtype=np.float64)
    clean = np.asarray(clean_labels)
    if x.ndim != 2 or clean.shape[0] != x.shape[0]:
        raise InvalidInput("features and clean_labels must agree on sample count")
    logits = f_true.logits(x)
    sigma = scale_field(logits, profile)
    z = normal_field(logits.shape, seed, TAG_CORRUPT)
    noisy = np.argmax(logits + sigma * z, axis=1)
    return NoisyDataset(
        features=x,
        clean_labels=clean,
        noisy_labels=noisy,
        true_scales=sigma,
        seed=seed,
        profile=profile,
    )


def _largest_remainder_sizes(n: int, fractions: tuple[float, float, float]) -> list[int]:
    exact = [f * n for f in fractions]
    sizes = [int(np.floor(e)) for e in exact]
    remainders = [e - s for e, s in zip(exact, sizes)]
    short = n - sum(sizes)
    # hand leftover samples to the largest remainders; ties to earlier splits
    order = sorted(range(len(fractions)), key=lambda i: (-remainders[i], i))
    for i in order[:short]:
        sizes[i] += 1
    return sizes


def split(
    dataset: NoisyDataset,
    fractions: tuple[float, float, float] = (0.7, 0.2, 0.1),
    seed: int = 0,
) -> tuple[NoisyDataset, NoisyDataset, NoisyDataset]:
    """Disjoint, exhaustive shuffled train/val/test split.

    Sizes follow largest-remainder rounding of the fractions, which by
    default mirror a 70/20/10 protocol.
    """
    fracs = tuple(float(f) for f in fractions)
    if len(fracs) != 3 or any(f <= 0 for f in fracs):
        raise InvalidInput(f"need three positive fractions, got {fractions}")
    if abs(sum(fracs) - 1.0) > 1e-9:
        raise InvalidInput(f"fractions must sum to 1, got {sum(fracs)}")
    n = len(dataset)
    sizes = _largest_remainder_sizes(n, fracs)
    if any(s < 1 for s in sizes):
        raise InvalidInput(f"split sizes {sizes} include an empty split for N={n}")

    perm = generator(seed, TAG_SPLIT).permutation(n)
    bounds = np.cumsum([0] + sizes)
    parts = []
    for tag, lo, hi in zip(SPLIT_TAGS, bounds[:-1], bounds[1:]):
        parts.append(dataset.subset(perm[lo:hi], split_tag=tag))
    return tuple(parts)


def _label_to_json(label):
    if np.ndim(label) == 0:
        return int(label)
    return [int(v) for v in label]


def save_dataset(dataset: NoisyDataset, path) -> None:
    """Writes header + one JSON object per sample (JSON Lines)."""
    header = {
        "format_version": DATASET_FORMAT_VERSION,
        "n": len(dataset),
        "d": dataset.features.shape[1],
        "k": dataset.num_classes,
        "head_mode": dataset.head_mode,
        "profile": None if dataset.profile is None else dataset.profile.to_dict(),
        "seed": dataset.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i in range(len(dataset)):
            row = {
                "features": dataset.features[i].tolist(),
                "clean_label": None
                if dataset.clean_labels is None
                else _label_to_json(dataset.clean_labels[i]),
                "noisy_label": _label_to_json(dataset.noisy_labels[i]),
                "true_scales": dataset.true_scales[i].tolist(),
                "split": dataset.split_tag,
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def load_dataset(path) -> NoisyDataset:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format_version") != DATASET_FORMAT_VERSION:
            raise InvalidInput(f"unsupported dataset format_version {header.get('format_version')!r}")
        rows = [json.loads(line) for line in fh if line.strip()]
    if len(rows) != header["n"]:
        raise InvalidInput(f"dataset header claims {header['n']} samples, file has {len(rows)}")

    features = np.array([r["features"] for r in rows], dtype=np.float64)
    scales = np.array([r["true_scales"] for r in rows], dtype=np.float64)
    noisy = np.array([r["noisy_label"] for r in rows])
    has_clean = all(r["clean_label"] is not None for r in rows)
    clean = np.array([r["clean_label"] for r in rows]) if has_clean else None
    tags = {r["split"] for r in rows}
    split_tag = tags.pop() if len(tags) == 1 else None
    return NoisyDataset(
        features=features,
        clean_labels=clean,
        noisy_labels=noisy,
        true_scales=scales,
        seed=int(header["seed"]),
        split_tag=split_tag,
        head_mode=header["head_mode"],
        profile=None if header["profile"] is None else NoiseProfile.from_dict(header["profile"]),
    )
