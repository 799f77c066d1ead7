"""Credit-rating prediction toolkit: temporal folds, gradient-boosted trees, tuning,
calibration, explanations and drift monitoring."""

__version__ = "0.1.0"

from .folds import PeriodIndex, TemporalFoldPlan, check_leakage, plan_folds  # noqa: E402
from .gbdt import GBDTClassifier, GBDTRegressor  # noqa: E402
from .ingest import AGENCIES, ObservationSet, SchemaMap, load_observations, summarize  # noqa: E402
from .preprocess import CreditPreprocessor, PreprocessPolicy  # noqa: E402
from .targets import DEFAULT_SCALE, RatingScale, build_targets  # noqa: E402

__all__ = [
    "AGENCIES",
    "CreditPreprocessor",
    "DEFAULT_SCALE",
    "GBDTClassifier",
    "GBDTRegressor",
    "ObservationSet",
    "PeriodIndex",
    "PreprocessPolicy",
    "RatingScale",
    "SchemaMap",
    "TemporalFoldPlan",
    "build_targets",
    "check_leakage",
    "load_observations",
    "plan_folds",
    "summarize",
]
