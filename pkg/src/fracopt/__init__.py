"""Direct maximization of linear-fractional classification metrics (F-beta, Jaccard,
Gower-Legendre, accuracy) with a calibrated surrogate utility."""

from .calibration import check_accuracy, check_general, check_metric, tau_range_fbeta, tau_range_jaccard
from .exceptions import CapacityError, DegenerateMetricError, InvalidInputError, ParseError, StationaryPoint
from .metrics import (
    ConfusionMatrix,
    DiscreteDistribution,
    Metric,
    MetricKind,
    MetricSpec,
    bayes_optimal_discrete,
    confusion_from_sample,
    metric_direct,
    spec_for,
    true_utility,
)
from .optimizer import LinearModel, OptimizerConfig, TrainResult, hybrid_train, nga_step, normalized_bfgs_step
from .surrogate import SplitSample, TauDiscrepantLoss, gradient_direction, surrogate_utility

__version__ = "0.1.0"

__all__ = [
    "CapacityError", "ConfusionMatrix", "DegenerateMetricError", "DiscreteDistribution", "InvalidInputError",
    "LinearModel", "Metric", "MetricKind", "MetricSpec", "OptimizerConfig", "ParseError", "SplitSample",
    "StationaryPoint", "TauDiscrepantLoss", "TrainResult", "bayes_optimal_discrete", "check_accuracy",
    "check_general", "check_metric", "confusion_from_sample", "gradient_direction", "hybrid_train",
    "metric_direct", "nga_step", "normalized_bfgs_step", "spec_for", "surrogate_utility", "tau_range_fbeta",
    "tau_range_jaccard", "true_utility",
]
