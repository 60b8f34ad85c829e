"""Minimal-volume prediction sets for interval-censored outcomes.

The outcome of interest is only observed as a bracket [y_lo, y_hi].  This
package estimates the smallest set (an interval, or a union of a few
disjoint intervals) that contains the bracket with a target probability
given covariates, and calibrates it by split conformal inference so the
coverage guarantee holds in finite samples.
"""

from .conformal import (
    CalibrationResult,
    Partition,
    conformal_threshold,
    differential_adjust,
    inflate,
    local_split_conformal,
    score,
    split_conformal,
    split_indices,
)
from .data import Dataset, Observation
from .kernels import (
    EmptyNeighborhoodError,
    KernelSpec,
    WeightVector,
    containment_prob,
    default_bandwidth,
    kernel_value,
    weights_at,
)
from .rules import PredictionRule, RuleUndefinedError
from .sets import (
    Interval,
    IntervalUnion,
    contains_bracket,
    is_subset,
    normalize_union,
    sym_diff_volume,
    volume,
)
from .solver import (
    SolverConfig,
    WeightedBrackets,
    auto_psi,
    brute_force_min_union,
    fit_prediction_rule,
    min_interval,
    min_union,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationResult",
    "Dataset",
    "EmptyNeighborhoodError",
    "Interval",
    "IntervalUnion",
    "KernelSpec",
    "Observation",
    "Partition",
    "PredictionRule",
    "RuleUndefinedError",
    "SolverConfig",
    "WeightedBrackets",
    "WeightVector",
    "auto_psi",
    "brute_force_min_union",
    "conformal_threshold",
    "containment_prob",
    "contains_bracket",
    "default_bandwidth",
    "differential_adjust",
    "fit_prediction_rule",
    "inflate",
    "is_subset",
    "kernel_value",
    "local_split_conformal",
    "min_interval",
    "min_union",
    "normalize_union",
    "score",
    "split_conformal",
    "split_indices",
    "sym_diff_volume",
    "volume",
    "weights_at",
]
