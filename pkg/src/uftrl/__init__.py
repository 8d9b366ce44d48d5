"""Unified FTRL online learners with implicit updates and composite objectives."""

__version__ = "0.1.0"

from .core import (
    ConfigError,
    ConvergenceError,
    DataError,
    Linear,
    Logistic,
    LossKind,
    MetricError,
    NumericError,
    ParseError,
    PenaltyKind,
    PenaltyMode,
    PenaltySchedule,
    RoundRecord,
    SparseExample,
    Squared,
    UftrlError,
    WeightVector,
    loss_margin_derivative,
    loss_value,
    penalty_value,
)
from .learners import (
    AlgorithmConfig,
    Family,
    LearnerState,
    LearningRateSchedule,
    LossHandling,
    RateMode,
    init,
    lazy_weight,
    load_checkpoint,
    predict,
    save_checkpoint,
    step,
)
from .solvers import (
    ScalarCompositeProblem,
    ball_project_argmin,
    composite_scalar_argmin,
    glm_implicit_solve,
)

__all__ = [
    "AlgorithmConfig",
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "Family",
    "LearnerState",
    "LearningRateSchedule",
    "Linear",
    "Logistic",
    "LossHandling",
    "LossKind",
    "MetricError",
    "NumericError",
    "ParseError",
    "PenaltyKind",
    "PenaltyMode",
    "PenaltySchedule",
    "RateMode",
    "RoundRecord",
    "ScalarCompositeProblem",
    "SparseExample",
    "Squared",
    "UftrlError",
    "WeightVector",
    "ball_project_argmin",
    "composite_scalar_argmin",
    "glm_implicit_solve",
    "init",
    "lazy_weight",
    "load_checkpoint",
    "loss_margin_derivative",
    "loss_value",
    "penalty_value",
    "predict",
    "save_checkpoint",
    "step",
    "__version__",
]
