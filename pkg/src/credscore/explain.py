"""Tree Shapley values, permutation importance and partial dependence."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from ._utils import derive_seed
from .metrics import auc, rmse

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@dataclass
class ShapMatrix:
    base_value: float
    phi: np.ndarray
    feature_names: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(self.feature_names)
        for row in self.phi:
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


@dataclass
class ImportanceRanking:
    features: list
    scores: list
    provenance: list = field(default_factory=list)
    raw_scores: list | None = None

    def top(self, n: int) -> list:
        return self.features[:n]

    def to_dict(self) -> dict:
        d = {"features": self.features, "scores": self.scores, "provenance": self.provenance}
        if self.raw_scores is not None:
            d["raw_scores"] = self.raw_scores
        return d


@dataclass
class PdpCurve:
    feature: str
    grid: list
    response: list

    def to_dict(self):
        return {"feature": self.feature, "grid": self.grid, "response": self.response}


# --------------------------------------------------------------------------- TreeSHAP kernel
# Path-dependent TreeSHAP over flat node arrays. Each tree depth level owns one slot
# of the path buffers; a child copies its parent's slot, so the depth-first stack
# never needs per-call allocation.


@njit(cache=True)
def _extend(fi, zf, of, pw, s, ud, z, o, f):
    fi[s, ud] = f
    zf[s, ud] = z
    of[s, ud] = o
    pw[s, ud] = 1.0 if ud == 0 else 0.0
    for i in range(ud - 1, -1, -1):
        pw[s, i + 1] += o * pw[s, i] * (i + 1) / (ud + 1)
        pw[s, i] = z * pw[s, i] * (ud - i) / (ud + 1)


@njit(cache=True)
def _unwind(fi, zf, of, pw, s, ud, idx):
    o = of[s, idx]
    z = zf[s, idx]
    nxt = pw[s, ud]
    for i in range(ud - 1, -1, -1):
        if o != 0.0:
            tmp = pw[s, i]
            pw[s, i] = nxt * (ud + 1) / ((i + 1) * o)
            nxt = tmp - pw[s, i] * z * (ud - i) / (ud + 1)
        else:
            pw[s, i] = pw[s, i] * (ud + 1) / (z * (ud - i))
    for i in range(idx, ud):
        fi[s, i] = fi[s, i + 1]
        zf[s, i] = zf[s, i + 1]
        of[s, i] = of[s, i + 1]


@njit(cache=True)
def _unwound_sum(zf, of, pw, s, ud, idx):
    o = of[s, idx]
    z = zf[s, idx]
    nxt = pw[s, ud]
    total = 0.0
    if o != 0.0:
        for i in range(ud - 1, -1, -1):
            tmp = nxt / ((i + 1) * o)
            total += tmp
            nxt = pw[s, i] - tmp * z * (ud - i)
    else:
        for i in range(ud - 1, -1, -1):
            total += pw[s, i] / (z * (ud - i))
    return total * (ud + 1)


@njit(cache=True)
def _shap_tree(x, feature, threshold, left, right, value, cover, max_depth, phi):
    width = max_depth + 2
    fi = np.zeros((width, width), dtype=np.int64)
    zf = np.zeros((width, width))
    of = np.zeros((width, width))
    pw = np.zeros((width, width))
    # stack of (node, depth, unique_depth, zero, one, feature)
    st_node = np.zeros(2 * width + 2, dtype=np.int64)
    st_depth = np.zeros(2 * width + 2, dtype=np.int64)
    st_ud = np.zeros(2 * width + 2, dtype=np.int64)
    st_z = np.zeros(2 * width + 2)
    st_o = np.zeros(2 * width + 2)
    st_f = np.zeros(2 * width + 2, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_depth[0] = 0
    st_ud[0] = 0
    st_z[0] = 1.0
    st_o[0] = 1.0
    st_f[0] = -1
    top = 1
    while top > 0:
        top -= 1
        node = st_node[top]
        d = st_depth[top]
        ud = st_ud[top]
        if d > 0:
            for i in range(ud):
                fi[d, i] = fi[d - 1, i]
                zf[d, i] = zf[d - 1, i]
                of[d, i] = of[d - 1, i]
                pw[d, i] = pw[d - 1, i]
        _extend(fi, zf, of, pw, d, ud, st_z[top], st_o[top], st_f[top])
        split = feature[node]
        if split < 0:
            for i in range(1, ud + 1):
                if of[d, i] == zf[d, i]:
                    continue
                w = _unwound_sum(zf, of, pw, d, ud, i)
                phi[fi[d, i]] += w * (of[d, i] - zf[d, i]) * value[node]
            continue
        if x[split] <= threshold[node]:
            hot = left[node]
            cold = right[node]
        else:
            hot = right[node]
            cold = left[node]
        c = cover[node]
        if c > 0:
            hz = cover[hot] / c
            cz = cover[cold] / c
        else:
            hz = 0.5
            cz = 0.5
        iz = 1.0
        io = 1.0
        pidx = -1
        for i in range(ud + 1):
            if fi[d, i] == split:
                pidx = i
                break
        if pidx >= 0:
            iz = zf[d, pidx]
            io = of[d, pidx]
            _unwind(fi, zf, of, pw, d, ud, pidx)
            ud -= 1
        # cold first so the hot branch is popped first
        if cz * iz != 0.0:
            st_node[top] = cold
            st_depth[top] = d + 1
            st_ud[top] = ud + 1
            st_z[top] = cz * iz
            st_o[top] = 0.0
            st_f[top] = split
            top += 1
        if hz * iz != 0.0 or io != 0.0:
            st_node[top] = hot
            st_depth[top] = d + 1
            st_ud[top] = ud + 1
            st_z[top] = hz * iz
            st_o[top] = io
            st_f[top] = split
            top += 1


@njit(cache=True)
def _shap_ensemble(X, feature, threshold, left, right, value, cover, offsets, depths, out):
    n_trees = offsets.size - 1
    for r in range(X.shape[0]):
        for t in range(n_trees):
            a = offsets[t]
            b = offsets[t + 1]
            _shap_tree(X[r], feature[a:b], threshold[a:b], left[a:b], right[a:b], value[a:b], cover[a:b], depths[t], out[r])


def _expected_value(tree) -> float:
    """Cover-weighted mean leaf value; zero-cover nodes split their weight evenly."""
    weights = np.zeros(tree.n_nodes)
    weights[0] = 1.0
    total = 0.0
    for node in range(tree.n_nodes):  # children always have larger ids than parents
        f = tree.feature[node]
        if f < 0:
            total += weights[node] * tree.value[node]
            continue
        c = tree.cover[node]
        l, r = tree.left[node], tree.right[node]
        if c > 0:
            weights[l] += weights[node] * tree.cover[l] / c
            weights[r] += weights[node] * tree.cover[r] / c
        else:
            weights[l] += weights[node] * 0.5
            weights[r] += weights[node] * 0.5
    return float(total)


def _check_model_columns(model, rows):
    from .gbdt._boosting import _as_matrix

    X, names = _as_matrix(rows)
    if X.shape[1] != model.n_features_in_ or (names is not None and names != model.feature_names_):
        raise ValueError("rows do not match the columns the model was trained on")
    return X


def tree_shap(model, rows) -> ShapMatrix:
    """Exact Shapley values of the raw (pre-link) prediction for every row.

    The background distribution is the one implied by the training row counts stored
    at each node, so ``base_value + phi.sum(axis=1)`` reproduces ``predict_raw``.
    """
    X = _check_model_columns(model, rows)
    trees = model.active_trees
    lr = model.learning_rate
    phi = np.zeros((X.shape[0], X.shape[1]))
    base = model.base_score_ + lr * sum(_expected_value(t) for t in trees)
    if trees:
        sizes = [t.n_nodes for t in trees]
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        cat = lambda attr: np.concatenate([getattr(t, attr) for t in trees])
        _shap_ensemble(
            np.ascontiguousarray(X, dtype=np.float64),
            cat("feature").astype(np.int64),
            cat("threshold").astype(np.float64),
            cat("left").astype(np.int64),
            cat("right").astype(np.int64),
            (cat("value") * lr).astype(np.float64),
            cat("cover").astype(np.float64),
            offsets,
            np.array([t.max_depth for t in trees], dtype=np.int64),
            phi,
        )
    return ShapMatrix(float(base), phi, list(model.feature_names_))


def aggregate_importance(shap_sets, provenance=None) -> ImportanceRanking:
    """Mean |phi| per feature pooled over every row of every input."""
    if not shap_sets:
        raise ValueError("need at least one Shapley matrix")
    names = shap_sets[0].feature_names
    for s in shap_sets[1:]:
        if s.feature_names != names:
            raise ValueError("Shapley matrices disagree on feature names")
    stacked = np.vstack([np.abs(s.phi) for s in shap_sets])
    scores = stacked.mean(axis=0)
    return _ranking(names, scores, provenance or [])


def _ranking(names, scores, provenance, raw=None) -> ImportanceRanking:
    order = sorted(range(len(names)), key=lambda j: (-scores[j], j))
    return ImportanceRanking(
        [names[j] for j in order],
        [float(scores[j]) for j in order],
        list(provenance),
        None if raw is None else [float(raw[j]) for j in order],
    )


def _model_output(model, X, metric):
    if metric == "auc":
        return model.predict_raw(X)
    return model.predict(X)


def permutation_scores(model, data, labels, metric: str = "auc", repeats: int = 5, seed: int = 0) -> np.ndarray:
    """Metric degradation for every (feature, repeat); larger means more important."""
    if metric not in ("auc", "rmse"):
        raise ValueError("metric must be 'auc' or 'rmse'")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X = _check_model_columns(model, data)
    y = np.asarray(labels, dtype=float)
    score = auc if metric == "auc" else rmse
    baseline = score(y, _model_output(model, X, metric))
    out = np.zeros((X.shape[1], repeats))
    for j in range(X.shape[1]):
        for r in range(repeats):
            rng = np.random.default_rng(derive_seed(seed, "permutation", j, r))
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(X.shape[0]), j]
            permuted = score(y, _model_output(model, Xp, metric))
            out[j, r] = baseline - permuted if metric == "auc" else permuted - baseline
    return out


def permutation_importance(model, data, labels, metric: str = "auc", repeats: int = 5, seed: int = 0) -> ImportanceRanking:
    raw = permutation_scores(model, data, labels, metric, repeats, seed).mean(axis=1)
    # noise can push an unused feature slightly below zero; rankings report non-negative scores
    return _ranking(list(model.feature_names_), np.maximum(raw, 0.0), [f"permutation:{metric}"], raw)


def partial_dependence(model, feature, grid, data) -> PdpCurve:
    X = _check_model_columns(model, data)
    names = list(model.feature_names_)
    if isinstance(feature, str):
        if feature not in names:
            raise KeyError(f"unknown feature {feature!r}")
        j = names.index(feature)
    else:
        j = int(feature)
        if not 0 <= j < len(names):
            raise KeyError(f"unknown feature index {feature}")
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ValueError("grid must not be empty")
    resp = []
    for g in grid:
        Xg = X.copy()
        Xg[:, j] = g
        resp.append(float(model.predict_raw(Xg).mean()))
    return PdpCurve(names[j], grid, resp)


def ranking_correlation(a: ImportanceRanking, b: ImportanceRanking) -> float:
    """Spearman correlation of scores over the features both rankings share."""
    common = [f for f in a.features if f in set(b.features)]
    if len(common) < 2:
        return 0.0
    sa = dict(zip(a.features, a.scores))
    sb = dict(zip(b.features, b.scores))
    rho = spearmanr([sa[f] for f in common], [sb[f] for f in common]).statistic
    return 0.0 if not np.isfinite(rho) else float(rho)


def rankings_to_json(rankings: dict) -> str:
    return json.dumps({k: v.to_dict() for k, v in rankings.items()}, indent=2, sort_keys=True)
