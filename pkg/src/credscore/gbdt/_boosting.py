"""Gradient-boosted tree estimators with a scikit-learn interface."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from .._utils import canonical_json, sha256_hex
from ._binning import apply_bins, bin_thresholds
from ._loss import base_score, loss_grad_hess, loss_value, sigmoid
from ._tree import GROWTH_MODES, GrowParams, Tree, grow_tree

FORMAT_VERSION = 1


class DegenerateTargetWarning(UserWarning):
    pass


@dataclass
class TrainLog:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    stopping_reason: str = ""

    def to_dict(self):
        return {"train_loss": self.train_loss, "val_loss": self.val_loss, "stopping_reason": self.stopping_reason}


def _as_matrix(X):
    """Accept ndarray, DataFrame or FeatureMatrix; return (values, column names or None)."""
    names = None
    if hasattr(X, "column_names") and hasattr(X, "values"):
        names, X = list(X.column_names), X.values
    elif hasattr(X, "columns"):
        names = [str(c) for c in X.columns]
    return check_array(X, dtype=np.float64, ensure_min_samples=1), names


class _BaseGBDT(BaseEstimator):
    _loss: str = ""

    def __init__(
        self,
        growth="depthwise",
        iterations=100,
        learning_rate=0.1,
        max_depth=None,
        num_leaves=31,
        subsample=1.0,
        feature_fraction=1.0,
        l1=0.0,
        l2=1.0,
        min_child_weight=1.0,
        min_split_gain=0.0,
        early_stopping_rounds=0,
        histogram_bins=64,
        seed=0,
        n_jobs=1,
    ):
        self.growth = growth
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.num_leaves = num_leaves
        self.subsample = subsample
        self.feature_fraction = feature_fraction
        self.l1 = l1
        self.l2 = l2
        self.min_child_weight = min_child_weight
        self.min_split_gain = min_split_gain
        self.early_stopping_rounds = early_stopping_rounds
        self.histogram_bins = histogram_bins
        self.seed = seed
        self.n_jobs = n_jobs

    def _validate_params(self):
        if self.growth not in GROWTH_MODES:
            raise ValueError(f"growth must be one of {GROWTH_MODES}, got {self.growth!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 < self.subsample <= 1 and 0 < self.feature_fraction <= 1):
            raise ValueError("subsample and feature_fraction must lie in (0, 1]")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.l1 < 0 or self.l2 < 0:
            raise ValueError("l1 and l2 must be non-negative")

    def _check_y(self, y):
        return np.asarray(y, dtype=float)

    def fit(self, X, y, eval_set=None):
        """Boost trees on ``(X, y)``; ``eval_set=(X_val, y_val)`` drives early stopping."""
        self._validate_params()
        X, names = _as_matrix(X)
        y = self._check_y(y)
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if X.shape[0] < 2:
            raise ValueError("need at least 2 training rows")
        if self.early_stopping_rounds and eval_set is None:
            raise ValueError("early_stopping_rounds > 0 requires eval_set")
        Xv = yv = None
        if eval_set is not None:
            Xv, _ = _as_matrix(eval_set[0])
            yv = self._check_y(eval_set[1])
            if Xv.shape[1] != X.shape[1]:
                raise ValueError("eval_set has a different number of columns")

        n, m = X.shape
        self.n_features_in_ = m
        self.feature_names_ = names or [f"f{j}" for j in range(m)]
        self.base_score_ = base_score(self._loss, y)
        self.trees_ = []
        log = TrainLog()
        self.train_log_ = log

        if self._loss == "logloss" and np.all(y == y[0]):
            warnings.warn("single-class target: model is the constant base score", DegenerateTargetWarning)
            self.best_iteration_ = 0
            log.stopping_reason = "degenerate target"
            return self

        thresholds = bin_thresholds(X, self.histogram_bins)
        Xb = apply_bins(X, thresholds)
        params = GrowParams(
            growth=self.growth,
            max_depth=self.max_depth,
            num_leaves=self.num_leaves,
            l1=self.l1,
            l2=self.l2,
            min_child_weight=self.min_child_weight,
            min_split_gain=self.min_split_gain,
            n_jobs=self.n_jobs,
        )
        rng = np.random.default_rng(self.seed)
        pred = np.full(n, self.base_score_)
        pred_v = None if Xv is None else np.full(Xv.shape[0], self.base_score_)
        best_loss, best_iter = np.inf, 0
        n_rows = max(1, int(round(self.subsample * n)))
        n_feats = max(1, int(round(self.feature_fraction * m)))
        log.stopping_reason = "iterations exhausted"

        for it in range(1, self.iterations + 1):
            g, h = loss_grad_hess(self._loss, y, pred)
            rows = np.sort(rng.choice(n, n_rows, replace=False)) if n_rows < n else np.arange(n)
            feats = np.sort(rng.choice(m, n_feats, replace=False)) if n_feats < m else np.arange(m)
            tree = grow_tree(Xb, thresholds, g, h, rows, feats, params)
            self.trees_.append(tree)
            pred += self.learning_rate * tree.predict(X)
            log.train_loss.append(loss_value(self._loss, y, pred))
            if pred_v is not None:
                pred_v += self.learning_rate * tree.predict(Xv)
                vl = loss_value(self._loss, yv, pred_v)
                log.val_loss.append(vl)
                if vl < best_loss:
                    best_loss, best_iter = vl, it
                elif self.early_stopping_rounds and it - best_iter >= self.early_stopping_rounds:
                    log.stopping_reason = "early stopping"
                    break
        self.best_iteration_ = best_iter if pred_v is not None else len(self.trees_)
        return self

    # ------------------------------------------------------------------ prediction

    def _check_fitted(self):
        if not hasattr(self, "trees_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def _check_columns(self, X):
        X, names = _as_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        if names is not None and names != self.feature_names_:
            raise ValueError("column names do not match the features the model was trained on")
        return X

    @property
    def active_trees(self) -> list:
        return self.trees_[: self.best_iteration_]

    def predict_raw(self, X) -> np.ndarray:
        """Base score plus the learning-rate-scaled sum of leaf values of the kept trees."""
        self._check_fitted()
        X = self._check_columns(X)
        out = np.full(X.shape[0], self.base_score_)
        for tree in self.active_trees:
            out += self.learning_rate * tree.predict(X)
        return out

    # ------------------------------------------------------------------ persistence

    def to_dict(self) -> dict:
        self._check_fitted()
        return {
            "format": "credscore.gbdt",
            "version": FORMAT_VERSION,
            "kind": type(self).__name__,
            "loss": self._loss,
            "params": self.get_params(),
            "base_score": self.base_score_,
            "best_iteration": self.best_iteration_,
            "feature_names": self.feature_names_,
            "trees": [t.to_dict() for t in self.trees_],
            "train_log": self.train_log_.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def model_hash(self) -> str:
        d = self.to_dict()
        d["params"] = {k: v for k, v in d["params"].items() if k != "n_jobs"}
        return sha256_hex(canonical_json(d))


class GBDTClassifier(ClassifierMixin, _BaseGBDT):
    """Binary classifier boosted on cross-entropy.

    ``growth`` picks the tree shape: ``"symmetric"`` (oblivious trees, one split per
    level), ``"leafwise"`` (best-first up to ``num_leaves``) or ``"depthwise"``
    (level-order up to ``max_depth``).
    """

    _loss = "logloss"

    def _check_y(self, y):
        y = np.asarray(y, dtype=float)
        if y.size and not np.all((y == 0) | (y == 1)):
            raise ValueError("GBDTClassifier expects binary 0/1 labels")
        return y

    def fit(self, X, y, eval_set=None):
        super().fit(X, y, eval_set)
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X) -> np.ndarray:
        p = sigmoid(self.predict_raw(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (sigmoid(self.predict_raw(X)) >= 0.5).astype(int)


class GBDTRegressor(RegressorMixin, _BaseGBDT):
    """Regressor boosted on squared error; same growth modes as :class:`GBDTClassifier`."""

    _loss = "squared_error"

    def predict(self, X) -> np.ndarray:
        return self.predict_raw(X)


def model_from_dict(d: dict):
    if d.get("format") != "credscore.gbdt" or d.get("version") != FORMAT_VERSION:
        raise ValueError("not a credscore GBDT document of a supported version")
    cls = {"GBDTClassifier": GBDTClassifier, "GBDTRegressor": GBDTRegressor}[d["kind"]]
    model = cls(**d["params"])
    model.base_score_ = float(d["base_score"])
    model.best_iteration_ = int(d["best_iteration"])
    model.feature_names_ = list(d["feature_names"])
    model.n_features_in_ = len(model.feature_names_)
    model.trees_ = [Tree.from_dict(t) for t in d["trees"]]
    tl = d.get("train_log", {})
    model.train_log_ = TrainLog(tl.get("train_loss", []), tl.get("val_loss", []), tl.get("stopping_reason", ""))
    if cls is GBDTClassifier:
        model.classes_ = np.array([0, 1])
    return model


def model_from_json(text: str):
    return model_from_dict(json.loads(text))
