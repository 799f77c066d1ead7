"""Quantile histogram binning fixed on the training fold."""

from __future__ import annotations

import numpy as np


def bin_thresholds(X: np.ndarray, max_bins: int = 64) -> list:
    """Per-feature split thresholds; a value goes left at a threshold when ``x <= t``.

    Features with at most ``max_bins`` distinct values split at midpoints between
    neighbours, others at their training quantiles.
    """
    if max_bins < 2:
        raise ValueError("histogram_bins must be at least 2")
    out = []
    for j in range(X.shape[1]):
        u = np.unique(X[:, j])
        if u.size <= max_bins:
            t = (u[:-1] + u[1:]) / 2.0
        else:
            q = np.quantile(X[:, j], np.linspace(0.0, 1.0, max_bins + 1)[1:-1])
            t = np.unique(q)
            t = t[t < u[-1]]
        out.append(t.astype(float))
    return out


def apply_bins(X: np.ndarray, thresholds: list) -> np.ndarray:
    """Bin index per cell: the count of thresholds strictly below the value."""
    out = np.empty(X.shape, dtype=np.uint16)
    for j, t in enumerate(thresholds):
        out[:, j] = np.searchsorted(t, X[:, j], side="left")
    return out
