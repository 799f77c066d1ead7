"""Objectives: per-row gradient and hessian, base score and loss value."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

LOSSES = ("logloss", "squared_error")
_PROB_CLIP = 1e-15


def sigmoid(x):
    return expit(x)


def loss_grad_hess(loss: str, y, pred_raw) -> tuple:
    y = np.asarray(y, dtype=float)
    pred_raw = np.asarray(pred_raw, dtype=float)
    if y.shape != pred_raw.shape:
        raise ValueError(f"shape mismatch: y {y.shape} vs pred {pred_raw.shape}")
    if loss == "logloss":
        p = expit(pred_raw)
        return p - y, p * (1.0 - p)
    if loss == "squared_error":
        return pred_raw - y, np.ones_like(y)
    raise ValueError(f"unknown loss {loss!r}")


def loss_value(loss: str, y, pred_raw) -> float:
    """Mean loss; squared error is halved so that its derivative is ``pred - y``."""
    y = np.asarray(y, dtype=float)
    pred_raw = np.asarray(pred_raw, dtype=float)
    if loss == "logloss":
        # log(1 + e^z) - y z, stable for large |z|
        return float(np.mean(np.logaddexp(0.0, pred_raw) - y * pred_raw))
    if loss == "squared_error":
        return float(np.mean(0.5 * (pred_raw - y) ** 2))
    raise ValueError(f"unknown loss {loss!r}")


def base_score(loss: str, y) -> float:
    y = np.asarray(y, dtype=float)
    m = float(y.mean())
    if loss == "squared_error":
        return m
    m = min(max(m, _PROB_CLIP), 1 - _PROB_CLIP)
    return float(np.log(m / (1 - m)))
