"""Backward conformal miscoverage estimates for budget-constrained NBI detection."""

from .budgetset import BatchSets, Budget, PredictionSetResult, build_set, build_sets, compute_cmax, lambda_star, order_labels
from .conformal import (
    CalibrationSet,
    DomainError,
    Method,
    MiscoverageEstimate,
    ScoreParams,
    bcp_alpha,
    e_value,
    miscovered,
    nc_score,
    nme_alpha,
)
from .core import (
    EPS_FLOOR,
    AllZeroError,
    CostModel,
    Example,
    Label,
    LabelKind,
    LabelSpace,
    LengthMismatchError,
    PredictiveDistribution,
    normalize,
    point_estimate,
)
from .estimator import BackwardConformalClassifier
from .harness import ExperimentConfig, InsufficientData, run_experiment
from .scenario import OfdmScenarioConfig, SyntheticDetectorConfig, generate_dataset

__version__ = "0.1.0"
