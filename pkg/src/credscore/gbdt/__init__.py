"""From-scratch gradient-boosted decision trees.

The estimators follow the scikit-learn protocol. The module-level functions mirror
the functional surface used by the pipeline (``fit`` returns the model and its
training log, ``predict_proba`` returns the positive-class probability only).
"""

from ._binning import apply_bins, bin_thresholds
from ._boosting import (
    DegenerateTargetWarning,
    GBDTClassifier,
    GBDTRegressor,
    TrainLog,
    model_from_dict,
    model_from_json,
)
from ._loss import base_score, loss_grad_hess, loss_value, sigmoid
from ._tree import GROWTH_MODES, GrowParams, Tree, grow_tree

__all__ = [
    "GBDTClassifier",
    "GBDTRegressor",
    "Tree",
    "TrainLog",
    "GrowParams",
    "GROWTH_MODES",
    "DegenerateTargetWarning",
    "apply_bins",
    "bin_thresholds",
    "base_score",
    "grow_tree",
    "loss_grad_hess",
    "loss_value",
    "sigmoid",
    "model_from_dict",
    "model_from_json",
    "fit",
    "predict_raw",
    "predict_proba",
]


def fit(train, y, loss: str = "logloss", val=None, **params):
    cls = GBDTClassifier if loss == "logloss" else GBDTRegressor
    if loss not in ("logloss", "squared_error"):
        raise ValueError(f"unknown loss {loss!r}")
    model = cls(**params).fit(train, y, eval_set=val)
    return model, model.train_log_


def predict_raw(model, rows):
    return model.predict_raw(rows)


def predict_proba(model, rows):
    if not isinstance(model, GBDTClassifier):
        raise TypeError("predict_proba needs a model trained with the logloss objective")
    return sigmoid(model.predict_raw(rows))
