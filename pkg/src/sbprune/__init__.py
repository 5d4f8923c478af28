"""Sentence-embedding encoders, structured layer pruning, and the training
and evaluation machinery around them, on a small reverse-mode autodiff core.

The numeric kernels have a compiled implementation and a pure-numpy
fallback; ``sbprune.backend.backend_name()`` reports which one is active,
and setting ``SBPRUNE_PURE_PYTHON=1`` before import forces the fallback.
"""

from .backend import backend_name
from .evaluation import (
    KnnReport,
    SimilarityReport,
    average_ranks,
    embed_texts,
    eval_knn,
    eval_sts,
    knn_classify,
    pearson,
    spearman,
)
from .experiments import (
    CompareStrategiesReport,
    ExperimentData,
    PrunedVsScratchReport,
    compare_strategies,
    pruned_vs_scratch,
)
from .errors import (
    ConfigError,
    CorruptionError,
    DimensionError,
    FormatError,
    InputError,
    NumericError,
    ParseError,
    PlanError,
    SbpruneError,
    UndefinedMetricError,
    UsageError,
)
from .pruning import PrunePlan, plan_prune, prune_model, verify_prune
from .tensor import Adam, Tape, Tensor, backward
from .training import (
    NliHead,
    TrainConfig,
    TrainHistory,
    nli_loss,
    sts_loss,
    train_phase,
    two_phase_pipeline,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "CompareStrategiesReport",
    "ConfigError",
    "CorruptionError",
    "DimensionError",
    "ExperimentData",
    "FormatError",
    "InputError",
    "KnnReport",
    "NliHead",
    "NumericError",
    "ParseError",
    "PlanError",
    "PrunePlan",
    "PrunedVsScratchReport",
    "SbpruneError",
    "SimilarityReport",
    "Tape",
    "Tensor",
    "TrainConfig",
    "TrainHistory",
    "UndefinedMetricError",
    "UsageError",
    "average_ranks",
    "backend_name",
    "backward",
    "compare_strategies",
    "embed_texts",
    "eval_knn",
    "eval_sts",
    "knn_classify",
    "nli_loss",
    "pearson",
    "plan_prune",
    "prune_model",
    "pruned_vs_scratch",
    "spearman",
    "sts_loss",
    "train_phase",
    "two_phase_pipeline",
    "verify_prune",
    "__version__",
]
