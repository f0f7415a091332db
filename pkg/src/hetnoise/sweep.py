"""Temperature selection over a fixed grid by validation metrics.

Each temperature gets a fresh model from the same initialization, is
trained identically, and scored on the validation split; the winner is
picked by the chosen metric with ties resolved toward temperature 1
(where the head reduces to the plain heteroscedastic model).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import HetnoiseError, InvalidConfig, InvalidInput
from .evaluation import auprc, f1_score
from .network import DETERMINISTIC, HetModel, TrainConfig, fit, predict_dataset

SWEEP_FORMAT_VERSION = 1
SELECTION_METRICS = ("f1", "auprc", "val_loss")


def max_workers() -> int:
    """Internal parallelism cap, from HETNOISE_THREADS (default: all cores)."""
    env = os.environ.get("HETNOISE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidConfig(f"HETNOISE_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


@dataclass
class SweepResult:
    grid: list[float]
    per_tau: list[dict]
    tau_star: float
    selection_metric: str

    def to_dict(self) -> dict:
        return {
            "format_version": SWEEP_FORMAT_VERSION,
            "grid": self.grid,
            "per_tau": self.per_tau,
            "tau_star": self.tau_star,
            "selection_metric": self.selection_metric,
        }


def default_grid() -> list[float]:
    """0.1 through 0.9 in steps of 0.1, then 1 through 10 in steps of 1."""
    return [round(0.1 * i, 1) for i in range(1, 10)] + [float(i) for i in range(1, 11)]


def normalize_grid(grid) -> list[float]:
    values = sorted({float(t) for t in grid})
    if not values:
        raise InvalidConfig("temperature grid is empty")
    if any(not np.isfinite(t) or t <= 0 for t in values):
        raise InvalidConfig(f"temperatures must be positive and finite, got {values}")
    return values


def select_tau(per_tau: list[dict], selection_metric: str) -> float:
    """Pure argmax/argmin over a per-temperature metric table.

    Only rows with status "ok" compete.  Ties go to the temperature
    closest to 1, then to the smaller one.
    """
    if selection_metric not in SELECTION_METRICS:
        raise InvalidConfig(f"selection_metric must be one of {SELECTION_METRICS}")
    ok = [row for row in per_tau if row["status"] == "ok"]
    if not ok:
        raise HetnoiseError("sweep failed at every temperature")
    sign = 1.0 if selection_metric == "val_loss" else -1.0
    best = min(ok, key=lambda r: (sign * r[selection_metric], abs(r["tau"] - 1.0), r["tau"]))
    return best["tau"]


def _evaluate_tau(template: HetModel, tau: float, train_set, val_set, cfg: TrainConfig, eval_seed: int) -> dict:
    model = replace(
        template,
        weights=[w.copy() for w in template.weights],
        biases=[b.copy() for b in template.biases],
        mc_config=replace(template.mc_config, temperature=tau),
    )
    try:
        trained, _ = fit(model, train_set, cfg)
        preds = predict_dataset(
            trained, val_set, cfg=replace(trained.mc_config, seed=eval_seed), against="noisy"
        )
        target = np.asarray(preds.target_labels)
        k = preds.num_classes
        if preds.task == "multiclass" and k == 2:
            f1 = f1_score(preds.pred_labels, target, mode="binary_positive")
            pr = auprc(preds.probs[:, 1], target)
        else:
            f1 = f1_score(preds.pred_labels, target, mode="micro")
            if preds.task == "multiclass":
                onehot = (target[:, None] == np.arange(k)[None, :]).astype(np.int64)
                pr = auprc(preds.probs.ravel(), onehot.ravel())
            else:
                pr = auprc(preds.probs.ravel(), target.ravel())
        return {
            "tau": tau,
            "f1": f1,
            "auprc": pr,
            "val_loss": float(preds.losses.mean()),
            "status": "ok",
        }
    except HetnoiseError as exc:
        return {"tau": tau, "f1": None, "auprc": None, "val_loss": None, "status": f"failed: {exc}"}


def run_sweep(
    train_set,
    val_set,
    template: HetModel,
    train_cfg: TrainConfig,
    grid=None,
    selection_metric: str = "auprc",
    eval_seed: int = 0,
    workers: int | None = None,
) -> SweepResult:
    """Trains one model per temperature and selects the validation winner.

    Every run starts from the template's weights, so initialization is
    identical across temperatures.  Per-temperature runs are independent
    and execute on a small thread pool; the table is assembled in grid
    order regardless of completion order.
    """
    if template.head_mode == DETERMINISTIC:
        raise InvalidConfig("temperature sweeps are undefined for the deterministic head")
    if len(val_set) == 0:
        raise InvalidInput("validation split is empty")
    values = normalize_grid(default_grid() if grid is None else grid)
    if selection_metric not in SELECTION_METRICS:
        raise InvalidConfig(f"selection_metric must be one of {SELECTION_METRICS}")

    pool = workers if workers is not None else max_workers()
    if pool > 1 and len(values) > 1:
        with ThreadPoolExecutor(max_workers=min(pool, len(values))) as ex:
            per_tau = list(
                ex.map(lambda t: _evaluate_tau(template, t, train_set, val_set, train_cfg, eval_seed), values)
            )
    else:
        per_tau = [_evaluate_tau(template, t, train_set, val_set, train_cfg, eval_seed) for t in values]

    tau_star = select_tau(per_tau, selection_metric)
    return SweepResult(grid=values, per_tau=per_tau, tau_star=tau_star, selection_metric=selection_metric)
