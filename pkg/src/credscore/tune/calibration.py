"""Isotonic (pool-adjacent-violators) and logistic score calibration."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .._utils import check_1d, check_binary, check_same_length, require_both_classes

SLOPE_CAP = 30.0


class SeparationWarning(UserWarning):
    pass


def pav(y, w=None) -> np.ndarray:
    """Least-squares non-decreasing fit to ``y`` taken in the given order."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    means, weights, sizes = [], [], []
    for yi, wi in zip(y, w):
        means.append(yi)
        weights.append(wi)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, s2 = means.pop(), weights.pop(), sizes.pop()
            m1, w1, s1 = means.pop(), weights.pop(), sizes.pop()
            wt = w1 + w2
            means.append((m1 * w1 + m2 * w2) / wt)
            weights.append(wt)
            sizes.append(s1 + s2)
    return np.repeat(means, sizes)


@dataclass
class IsotonicMap:
    breakpoints: np.ndarray
    values: np.ndarray

    def apply(self, scores) -> np.ndarray:
        """Right-continuous step function, clamped outside the fitted range."""
        s = np.asarray(scores, dtype=float)
        idx = np.searchsorted(self.breakpoints, s, side="right") - 1
        return self.values[np.clip(idx, 0, self.values.size - 1)]

    def to_dict(self):
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["breakpoints"], dtype=float), np.asarray(d["values"], dtype=float))


def isotonic_fit_values(scores, targets, weights=None) -> tuple:
    """Pool tied scores, then run PAV; returns (unique sorted scores, fitted values)."""
    s = check_1d(scores, "scores")
    t = check_1d(targets, "targets")
    check_same_length(scores=s, targets=t)
    w = np.ones_like(s) if weights is None else check_1d(weights, "weights")
    order = np.argsort(s, kind="mergesort")
    s, t, w = s[order], t[order], w[order]
    uniq, start = np.unique(s, return_index=True)
    wsum = np.add.reduceat(w, start)
    tmean = np.add.reduceat(t * w, start) / wsum
    return uniq, pav(tmean, wsum)


def fit_isotonic(scores, labels) -> IsotonicMap:
    y = check_binary(labels)
    s = check_1d(scores, "scores")
    check_same_length(scores=s, labels=y)
    if y.size < 2:
        raise ValueError("isotonic calibration needs at least 2 samples")
    require_both_classes(y, "isotonic calibration")
    bps, vals = isotonic_fit_values(s, y)
    return IsotonicMap(bps, np.clip(vals, 0.0, 1.0))


def apply_isotonic(m: IsotonicMap, scores) -> np.ndarray:
    return m.apply(scores)


@dataclass
class LogisticCalibration:
    a: float
    b: float

    def apply(self, scores) -> np.ndarray:
        return expit(self.a * np.asarray(scores, dtype=float) + self.b)

    def to_dict(self):
        return {"a": self.a, "b": self.b}


def _nll(theta, s, y):
    z = theta[0] * s + theta[1]
    return float(np.sum(np.logaddexp(0.0, z) - y * z))


def fit_logistic_calibration(scores, default_labels, tol: float = 1e-10, max_iter: int = 100) -> LogisticCalibration:
    """Maximum-likelihood ``PD = sigmoid(a * score + b)`` by damped Newton steps.

    The slope is capped at ``|a| <= 30``; hitting the cap (perfect separation)
    raises a :class:`SeparationWarning`.
    """
    s = check_1d(scores, "scores")
    y = check_binary(default_labels, "default_labels")
    check_same_length(scores=s, default_labels=y)
    require_both_classes(y, "logistic calibration")
    X = np.column_stack([s, np.ones_like(s)])
    rate = y.mean()
    theta = np.array([0.0, np.log(rate / (1 - rate))])
    capped = False
    for _ in range(max_iter):
        p = expit(X @ theta)
        grad = X.T @ (p - y)
        free = np.array([not capped, True])
        if np.linalg.norm(grad[free]) / y.size < tol:
            break
        W = p * (1 - p)
        H = (X * W[:, None]).T @ X
        step = np.zeros(2)
        Hf = H[np.ix_(free, free)] + 1e-12 * np.eye(int(free.sum()))
        step[free] = np.linalg.solve(Hf, grad[free])
        f0 = _nll(theta, s, y)
        t = 1.0
        while t > 1e-10 and _nll(theta - t * step, s, y) > f0:
            t *= 0.5
        if t <= 1e-10:
            break
        theta = theta - t * step
        if abs(theta[0]) > SLOPE_CAP:
            theta[0] = np.sign(theta[0]) * SLOPE_CAP
            capped = True
    if capped:
        warnings.warn(f"scores separate the classes; slope capped at {SLOPE_CAP}", SeparationWarning)
    return LogisticCalibration(float(theta[0]), float(theta[1]))


class IsotonicCalibrator(BaseEstimator, TransformerMixin):
    """Monotone probability calibration; ``transform`` maps scores to calibrated probabilities."""

    def fit(self, X, y):
        self.map_ = fit_isotonic(np.ravel(X), y)
        return self

    def transform(self, X):
        if not hasattr(self, "map_"):
            raise NotFittedError("IsotonicCalibrator is not fitted yet")
        return self.map_.apply(np.ravel(X))

    predict = transform


class LogisticCalibrator(BaseEstimator, TransformerMixin):
    def fit(self, X, y):
        self.calibration_ = fit_logistic_calibration(np.ravel(X), y)
        return self

    def transform(self, X):
        if not hasattr(self, "calibration_"):
            raise NotFittedError("LogisticCalibrator is not fitted yet")
        return self.calibration_.apply(np.ravel(X))

    predict = transform
