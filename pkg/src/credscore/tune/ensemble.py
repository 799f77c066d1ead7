"""Convex ensemble weights chosen by a deterministic simplex search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..metrics import auc, rmse
from .._utils import require_both_classes

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class EnsembleWeights:
    weights: np.ndarray
    score: float

    def combine(self, preds) -> np.ndarray:
        P = np.atleast_2d(np.asarray(preds, dtype=float))
        return self.weights @ P

    def to_dict(self):
        return {"weights": self.weights.tolist(), "score": self.score}


def simplex_grid(n_models: int, resolution: int) -> np.ndarray:
    """All weight vectors with entries in multiples of 1/resolution summing to one."""
    rows = []
    for cuts in itertools.combinations(range(resolution + n_models - 1), n_models - 1):
        parts = np.diff(np.r_[-1, cuts, resolution + n_models - 1]) - 1
        rows.append(parts / resolution)
    return np.array(rows, dtype=float)


def _metric_fn(metric):
    if callable(metric):
        return metric
    if metric == "auc":
        return auc
    if metric == "rmse":
        return lambda y, p: -rmse(y, p)
    raise ValueError(f"unknown metric {metric!r}")


def _normalize(w):
    w = np.maximum(w, 0.0)
    return w / w.sum()


def _golden_max(f, lo=0.0, hi=1.0, iters=40):
    a, b = lo, hi
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def optimize_weights(val_preds, labels, metric="auc", resolution: int = 20, sweeps: int = 2) -> EnsembleWeights:
    """Maximise ``metric(labels, w @ preds)`` over the probability simplex.

    A grid at ``resolution`` seeds the search (the uniform vector is always a
    candidate). Among AUC ties the lowest-Brier blend is kept, then the one nearest
    uniform. Each coordinate is then refined by golden-section search along the
    segment towards its vertex; refinements are kept only when they strictly
    improve the score.
    """
    P = np.atleast_2d(np.asarray(val_preds, dtype=float))
    y = np.asarray(labels, dtype=float)
    if P.shape[1] != y.size:
        raise ValueError("prediction vectors and labels differ in length")
    if metric == "auc":
        require_both_classes(y, "AUC-based ensemble weighting")
    score_fn = _metric_fn(metric)
    M = P.shape[0]
    if M == 1:
        return EnsembleWeights(np.array([1.0]), float(score_fn(y, P[0])))

    def score(w):
        return float(score_fn(y, w @ P))

    uniform = np.full(M, 1.0 / M)
    cands = np.vstack([uniform, simplex_grid(M, resolution)])
    scores = np.array([score(w) for w in cands])
    top = scores.max()
    tied = np.flatnonzero(scores == top)
    if metric == "auc" and tied.size > 1:
        # AUC plateaus are common; prefer the best-calibrated blend on the plateau
        brier = np.array([np.mean((cands[i] @ P - y) ** 2) for i in tied])
        tied = tied[brier <= brier.min() + 1e-12]
    dist = np.linalg.norm(cands[tied] - uniform, axis=1)
    best_w, best_s = cands[tied[int(np.argmin(dist))]].copy(), float(top)

    for _ in range(sweeps):
        improved = False
        for j in range(M):
            rest = best_w.copy()
            rest[j] = 0.0
            rest = rest / rest.sum() if rest.sum() > 0 else np.where(np.arange(M) == j, 0.0, 1.0 / (M - 1))
            e = np.zeros(M)
            e[j] = 1.0
            t, _ = _golden_max(lambda t: score(t * e + (1 - t) * rest))
            w = _normalize(t * e + (1 - t) * rest)
            s = score(w)
            if s > best_s:
                best_w, best_s, improved = w, s, True
        if not improved:
            break
    return EnsembleWeights(_normalize(best_w), best_s)
