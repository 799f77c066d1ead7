"""Hyperparameter search, ensemble weighting and calibration."""

from .calibration import (
    IsotonicCalibrator,
    IsotonicMap,
    LogisticCalibration,
    LogisticCalibrator,
    SeparationWarning,
    apply_isotonic,
    fit_isotonic,
    fit_logistic_calibration,
    isotonic_fit_values,
    pav,
)
from .ensemble import EnsembleWeights, optimize_weights, simplex_grid
from .tpe import TABLE2_SPACES, Dimension, SearchSpace, StudyState, run_study, suggest

__all__ = [
    "Dimension",
    "EnsembleWeights",
    "IsotonicCalibrator",
    "IsotonicMap",
    "LogisticCalibration",
    "LogisticCalibrator",
    "SearchSpace",
    "SeparationWarning",
    "StudyState",
    "TABLE2_SPACES",
    "apply_isotonic",
    "fit_isotonic",
    "fit_logistic_calibration",
    "isotonic_fit_values",
    "optimize_weights",
    "pav",
    "run_study",
    "simplex_grid",
    "suggest",
]
