"""Heteroscedastic label-noise modeling and uncertainty evaluation toolkit."""

__version__ = "0.1.0"

from .datasets import (
    CleanTask,
    NoiseProfile,
    NoisyDataset,
    corrupt,
    load_dataset,
    make_clean_task,
    save_dataset,
    split,
)
from .errors import (
    HetnoiseError,
    InvalidConfig,
    InvalidInput,
    TrainingFailure,
    UndefinedMetric,
)
from .evaluation import (
    DensitySummary,
    DiscardCurve,
    PredictionSet,
    auprc,
    build_report,
    default_fractions,
    density_summary,
    discard_test,
    f1_score,
    sigma_oracle_correlation,
)
from .network import (
    HetModel,
    TrainConfig,
    fit,
    forward,
    grad,
    init_model,
    load_model,
    loss,
    predict_dataset,
    save_model,
)
from .probhead import (
    LogitDistribution,
    MCConfig,
    ProbOutput,
    aleatoric_summary,
    gaussian_argmax_prob,
    tempered_mc_sigmoid,
    tempered_mc_softmax,
)
from .sweep import SweepResult, default_grid, run_sweep, select_tau

__all__ = [
    "CleanTask",
    "DensitySummary",
    "DiscardCurve",
    "HetModel",
    "HetnoiseError",
    "InvalidConfig",
    "InvalidInput",
    "LogitDistribution",
    "MCConfig",
    "NoiseProfile",
    "NoisyDataset",
    "PredictionSet",
    "ProbOutput",
    "SweepResult",
    "TrainConfig",
    "TrainingFailure",
    "UndefinedMetric",
    "aleatoric_summary",
    "auprc",
    "build_report",
    "corrupt",
    "default_fractions",
    "default_grid",
    "density_summary",
    "discard_test",
    "f1_score",
    "fit",
    "forward",
    "gaussian_argmax_prob",
    "grad",
    "init_model",
    "load_dataset",
    "load_model",
    "loss",
    "make_clean_task",
    "predict_dataset",
    "run_sweep",
    "save_dataset",
    "save_model",
    "select_tau",
    "sigma_oracle_correlation",
    "split",
    "tempered_mc_sigmoid",
    "tempered_mc_softmax",
]
