"""
Mean-field game layer: best response, conditional HJB, consistency fixed
point and ε-Nash estimation.
"""

from .fields import PolicyField, ValueField
from .fixed_point import (
    FixedPointResult,
    measure_feature_projection,
    mfg_fixed_point_deterministic,
    mfg_fixed_point_per_path,
)
from .hjb import best_response, hjb_backward, hjb_residual
from .nash import (
    AdditiveDeviation,
    NullDeviation,
    ScaleDeviation,
    TimeShiftDeviation,
    default_deviation_family,
    epsilon_nash_estimate,
    nash_seed_coupled_gains,
    nash_seed_gains,
    summarize_gains,
)

__all__ = [
    # Fields
    "PolicyField",
    "ValueField",
    # HJB
    "best_response",
    "hjb_backward",
    "hjb_residual",
    # Fixed point
    "FixedPointResult",
    "mfg_fixed_point_deterministic",
    "mfg_fixed_point_per_path",
    "measure_feature_projection",
    # Nash
    "NullDeviation",
    "AdditiveDeviation",
    "ScaleDeviation",
    "TimeShiftDeviation",
    "default_deviation_family",
    "epsilon_nash_estimate",
    "nash_seed_coupled_gains",
    "nash_seed_gains",
    "summarize_gains",
]
