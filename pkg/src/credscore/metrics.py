"""Classification and regression metrics, DeLong test, bootstrap intervals and PSI."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm, rankdata

from ._utils import check_1d, check_binary, check_same_length, require_both_classes

PSI_FLAG_THRESHOLD = 0.25
PSI_FLOOR = 1e-4


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, labels, predicted) -> "ConfusionCounts":
        y = np.asarray(labels, dtype=int)
        p = np.asarray(predicted, dtype=int)
        return cls(
            tp=int(np.sum((y == 1) & (p == 1))),
            fp=int(np.sum((y == 0) & (p == 1))),
            tn=int(np.sum((y == 0) & (p == 0))),
            fn=int(np.sum((y == 1) & (p == 0))),
        )


@dataclass
class ClassificationReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float | None
    brier: float
    kappa: float
    threshold: float

    def to_dict(self):
        return asdict(self)


@dataclass
class RegressionReport:
    rmse: float
    mae: float
    r2: float | None

    def to_dict(self):
        return asdict(self)


@dataclass
class DeLongResult:
    auc_a: float
    auc_b: float
    var_diff: float
    z: float
    p_value: float

    def to_dict(self):
        return asdict(self)


@dataclass
class BootstrapCI:
    point: float
    lower: float
    upper: float
    level: float
    n_resamples: int
    n_skipped: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass
class PsiReport:
    psi: dict
    flagged: list
    bin_edges: dict

    def to_dict(self):
        return asdict(self)


# --------------------------------------------------------------------------- AUC


def auc(labels, scores) -> float:
    """Mann-Whitney AUC: (concordant + 0.5 * tied) / (n_pos * n_neg), via midranks."""
    y = check_binary(labels)
    s = check_1d(scores, "scores")
    check_same_length(labels=y, scores=s)
    require_both_classes(y, "AUC")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    ranks = rankdata(s, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def roc_curve_points(labels, scores) -> tuple:
    """(fpr, tpr, thresholds) with one point per distinct score, starting at (0, 0)."""
    y = check_binary(labels)
    s = check_1d(scores, "scores")
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    last_of_group = np.r_[np.diff(s_sorted) != 0, True]
    tps = np.cumsum(y_sorted)[last_of_group]
    fps = np.cumsum(1 - y_sorted)[last_of_group]
    tpr = np.r_[0.0, tps / max(y.sum(), 1)]
    fpr = np.r_[0.0, fps / max(y.size - y.sum(), 1)]
    return fpr, tpr, np.r_[np.inf, s_sorted[last_of_group]]


def auc_trapezoid(labels, scores) -> float:
    require_both_classes(np.asarray(labels), "AUC")
    fpr, tpr, _ = roc_curve_points(labels, scores)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))


# --------------------------------------------------------------------------- classification


def kappa(c: ConfusionCounts) -> float:
    n = c.total
    if n <= 0:
        raise ValueError("kappa needs a non-empty confusion matrix")
    # (P_o - P_e) / (1 - P_e) scaled by n^2 so counts stay integral until one final division
    chance = (c.tp + c.fp) * (c.tp + c.fn) + (c.tn + c.fn) * (c.tn + c.fp)
    den = n * n - chance
    if den == 0:
        warnings.warn("expected agreement is 1; kappa defined as 0", RuntimeWarning)
        return 0.0
    return (n * (c.tp + c.tn) - chance) / den


def _safe_ratio(num: float, den: float, what: str) -> float:
    if den == 0:
        warnings.warn(f"{what} is 0/0; reported as 0", RuntimeWarning)
        return 0.0
    return num / den


def classification_metrics(labels, probs, threshold: float = 0.5) -> ClassificationReport:
    y = check_binary(labels)
    p = check_1d(probs, "probs")
    check_same_length(labels=y, probs=p)
    if y.size == 0:
        raise ValueError("classification metrics need at least one row")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    pred = (p >= threshold).astype(int)
    c = ConfusionCounts.from_predictions(y, pred)
    precision = _safe_ratio(c.tp, c.tp + c.fp, "precision")
    recall = _safe_ratio(c.tp, c.tp + c.fn, "recall")
    f1 = _safe_ratio(2 * precision * recall, precision + recall, "f1") if (precision + recall) else 0.0
    has_both = 0 < y.sum() < y.size
    return ClassificationReport(
        accuracy=(c.tp + c.tn) / c.total,
        precision=precision,
        recall=recall,
        f1=f1,
        auc=auc(y, p) if has_both else None,
        brier=float(np.mean((p - y) ** 2)),
        kappa=kappa(c),
        threshold=threshold,
    )


def log_loss(labels, probs, eps: float = 1e-15) -> float:
    y = np.asarray(labels, dtype=float)
    p = np.clip(np.asarray(probs, dtype=float), eps, 1 - eps)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def calibration_curve(labels, probs, n_bins: int = 10) -> dict:
    """Equal-width reliability bins; empty bins are omitted."""
    y = np.asarray(labels, dtype=float)
    p = np.asarray(probs, dtype=float)
    idx = np.minimum((p * n_bins).astype(int), n_bins - 1)
    mean_pred, frac_pos, count = [], [], []
    for b in range(n_bins):
        m = idx == b
        if m.any():
            mean_pred.append(float(p[m].mean()))
            frac_pos.append(float(y[m].mean()))
            count.append(int(m.sum()))
    return {"mean_predicted": mean_pred, "fraction_positive": frac_pos, "count": count}


# --------------------------------------------------------------------------- regression


def regression_metrics(y, pred) -> RegressionReport:
    y = check_1d(y, "y")
    pred = check_1d(pred, "pred")
    check_same_length(y=y, pred=pred)
    if y.size == 0:
        raise ValueError("regression metrics need at least one row")
    err = pred - y
    sse = float(np.sum(err**2))
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = None if (y.size < 2 or sst == 0) else 1 - sse / sst
    return RegressionReport(rmse=float(np.sqrt(sse / y.size)), mae=float(np.mean(np.abs(err))), r2=r2)


def rmse(y, pred) -> float:
    return regression_metrics(y, pred).rmse


# --------------------------------------------------------------------------- DeLong


def _structural_components(y: np.ndarray, s: np.ndarray) -> tuple:
    """Placement values of positives (V10) and negatives (V01) from midranks."""
    pos, neg = s[y == 1], s[y == 0]
    m, n = pos.size, neg.size
    r_all = rankdata(np.r_[pos, neg], method="average")
    r_pos = rankdata(pos, method="average")
    r_neg = rankdata(neg, method="average")
    v10 = (r_all[:m] - r_pos) / n
    v01 = 1.0 - (r_all[m:] - r_neg) / m
    return v10, v01


def delong_test(labels, scores_a, scores_b) -> DeLongResult:
    y = check_binary(labels)
    a = check_1d(scores_a, "scores_a")
    b = check_1d(scores_b, "scores_b")
    check_same_length(labels=y, scores_a=a, scores_b=b)
    require_both_classes(y, "DeLong test")
    v10a, v01a = _structural_components(y, a)
    v10b, v01b = _structural_components(y, b)
    auc_a, auc_b = float(v10a.mean()), float(v10b.mean())
    m, n = v10a.size, v01a.size
    s10 = np.cov(np.vstack([v10a, v10b])) if m > 1 else np.zeros((2, 2))
    s01 = np.cov(np.vstack([v01a, v01b])) if n > 1 else np.zeros((2, 2))
    cov = s10 / m + s01 / n
    var = float(cov[0, 0] + cov[1, 1] - 2 * cov[0, 1])
    diff = auc_a - auc_b
    if diff == 0.0:
        return DeLongResult(auc_a, auc_b, max(var, 0.0), 0.0, 1.0)
    if var <= 0:
        return DeLongResult(auc_a, auc_b, 0.0, float(np.sign(diff) * np.inf), 0.0)
    z = diff / np.sqrt(var)
    return DeLongResult(auc_a, auc_b, var, float(z), float(2 * norm.sf(abs(z))))


# --------------------------------------------------------------------------- bootstrap


def bootstrap_ci(stat, data, n_resamples: int = 1000, seed: int = 0, level: float = 0.95, max_retries: int = 10) -> BootstrapCI:
    """Percentile interval of ``stat(*resampled_arrays)`` under row resampling.

    ``data`` is a tuple of equal-length arrays resampled jointly. A resample on which
    ``stat`` raises ``ValueError`` (e.g. AUC on a single class) is redrawn up to
    ``max_retries`` times, then skipped and counted.
    """
    arrays = tuple(np.asarray(d) for d in data)
    n = check_same_length(**{f"data{i}": a for i, a in enumerate(arrays)})
    point = float(stat(*arrays))
    rng = np.random.default_rng(seed)
    values, skipped = [], 0
    for _ in range(n_resamples):
        for _attempt in range(max_retries + 1):
            idx = rng.integers(0, n, n)
            try:
                values.append(float(stat(*(a[idx] for a in arrays))))
                break
            except ValueError:
                continue
        else:
            skipped += 1
    if len(values) < 100:
        raise ValueError(f"only {len(values)} valid bootstrap resamples (need at least 100)")
    alpha = (1 - level) / 2
    lo, hi = np.quantile(values, [alpha, 1 - alpha])
    return BootstrapCI(point, float(lo), float(hi), level, n_resamples, skipped)


# --------------------------------------------------------------------------- PSI


def psi_from_proportions(expected, actual, floor: float = PSI_FLOOR) -> float:
    e = np.maximum(np.asarray(expected, dtype=float), floor)
    a = np.maximum(np.asarray(actual, dtype=float), floor)
    return float(np.sum((a - e) * np.log(a / e)))


def psi_flagged(value: float) -> bool:
    return value > PSI_FLAG_THRESHOLD


def psi_value(expected, actual, n_bins: int = 10) -> tuple:
    """PSI of ``actual`` against bins cut at the quantiles of ``expected``; returns (psi, edges)."""
    e = check_1d(expected, "expected")
    a = check_1d(actual, "actual")
    if e.size == 0 or a.size == 0:
        raise ValueError("PSI needs non-empty expected and actual samples")
    edges = np.unique(np.quantile(e, np.linspace(0, 1, n_bins + 1)[1:-1]))
    # bins are (-inf, e1], (e1, e2], ..., (ek, inf)
    e_bins = np.searchsorted(edges, e, side="left")
    a_bins = np.searchsorted(edges, a, side="left")
    k = edges.size + 1
    e_prop = np.bincount(e_bins, minlength=k) / e.size
    a_prop = np.bincount(a_bins, minlength=k) / a.size
    return psi_from_proportions(e_prop, a_prop), edges


def psi(expected, actual, n_bins: int = 10, feature_names=None) -> PsiReport:
    """Per-feature PSI report. Accepts 1-D samples or 2-D (rows x features) matrices."""
    e = np.asarray(expected, dtype=float)
    a = np.asarray(actual, dtype=float)
    if e.ndim == 1:
        e, a = e[:, None], a[:, None]
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(e.shape[1])]
    values, edges = {}, {}
    for j, name in enumerate(names):
        v, ed = psi_value(e[:, j], a[:, j], n_bins)
        values[name] = v
        edges[name] = ed.tolist()
    return psi_report(values, edges)


def psi_report(values: dict, edges: dict | None = None) -> PsiReport:
    return PsiReport(dict(values), [k for k, v in values.items() if psi_flagged(v)], edges or {})
