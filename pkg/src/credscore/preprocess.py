"""Leak-free preprocessing: deduplication, ratio derivation and a fit-on-train transformer.

The transformer follows the scikit-learn estimator protocol. Everything it learns lives
in trailing-underscore attributes, is computed from the training fold only, and
serializes to a versioned JSON document.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._utils import canonical_json, sha256_hex
from .ingest import ObservationSet, _skewness
from .metrics import auc

FORMAT_VERSION = 1
MISSING_CATEGORY = "__missing__"
DENOMINATOR_EPS = 1e-12

# name -> (numerator column, denominator column)
DEFAULT_FORMULAS = {
    "interest_coverage": ("EBIT", "interest_expense"),
    "ebitda_margin": ("EBITDA", "revenue"),
    "fcf_margin": ("free_cash_flow", "revenue"),
    "short_term_leverage": ("short_term_debt", "total_capital"),
    "long_term_leverage": ("long_term_debt", "total_capital"),
}


class DerivationWarning(UserWarning):
    pass


@dataclass
class AuditLog:
    exact_duplicates_removed: list = field(default_factory=list)
    near_duplicates_resolved: list = field(default_factory=list)
    dropped_features: list = field(default_factory=list)

    def merge(self, other: "AuditLog") -> "AuditLog":
        return AuditLog(
            self.exact_duplicates_removed + other.exact_duplicates_removed,
            self.near_duplicates_resolved + other.near_duplicates_resolved,
            self.dropped_features + other.dropped_features,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PreprocessPolicy:
    low_missing_band: float = 0.05
    high_missing_band: float = 0.25
    knn_k: int = 5
    winsor_lo: float = 0.01
    winsor_hi: float = 0.99
    log_skew_threshold: float = 2.0
    woe_cardinality_threshold: int = 10
    drop_auc_margin: float = 0.02

    def validate(self) -> None:
        if not 0 <= self.low_missing_band < self.high_missing_band <= 1:
            raise ValueError("need 0 <= low_missing_band < high_missing_band <= 1")
        if not 0 <= self.winsor_lo < self.winsor_hi <= 1:
            raise ValueError("need 0 <= winsor_lo < winsor_hi <= 1")
        if self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")


@dataclass
class FeatureMatrix:
    column_names: list
    values: np.ndarray
    row_keys: list

    @property
    def shape(self):
        return self.values.shape


# --------------------------------------------------------------------------- rows


def _row_signature(frame: pd.DataFrame) -> pd.Series:
    # NaN-aware: two blanks in the same cell count as equal
    return frame.astype(object).where(frame.notna(), "<NA>").astype(str).agg("\x1f".join, axis=1)


def deduplicate(obs: ObservationSet) -> tuple:
    """Drop exact duplicates, then keep the most complete row per (firm, agency, period)."""
    audit = AuditLog()
    frame = obs.frame
    if frame.empty:
        return obs.copy(), audit
    cols = ["firm_id", "agency", "rating", "period"] + obs.features
    sig = _row_signature(frame[cols])
    exact = sig.duplicated(keep="first")
    audit.exact_duplicates_removed = [int(i) for i in frame.index[exact.to_numpy()]]
    kept = frame.loc[~exact.to_numpy()]

    n_missing = kept[obs.features].isna().sum(axis=1) if obs.features else pd.Series(0, index=kept.index)
    keep_idx = []
    for key, grp in kept.groupby(["firm_id", "agency", "period"], sort=False):
        if len(grp) == 1:
            keep_idx.append(grp.index[0])
            continue
        miss = n_missing.loc[grp.index].to_numpy()
        winner = grp.index[int(np.argmin(miss))]  # argmin takes the first minimum: file order
        keep_idx.append(winner)
        audit.near_duplicates_resolved.append(
            (str(key[0]), str(key[2]), int(winner), [int(i) for i in grp.index if i != winner])
        )
    keep_idx = sorted(keep_idx)
    return obs.subset(keep_idx), audit


def derive_features(obs: ObservationSet, formulas: dict | None = None) -> ObservationSet:
    """Add contemporaneous ratio features; skips any ratio whose source columns are absent."""
    formulas = DEFAULT_FORMULAS if formulas is None else formulas
    out = obs.copy()
    f = out.frame
    for name, (num, den) in formulas.items():
        if num not in f.columns or den not in f.columns:
            absent = [c for c in (num, den) if c not in f.columns]
            warnings.warn(f"skipping derived feature {name!r}: missing source columns {absent}", DerivationWarning)
            continue
        n = f[num].to_numpy(dtype=float)
        d = f[den].to_numpy(dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(np.abs(d) < DENOMINATOR_EPS, np.nan, n / d)
        if name in f.columns:
            old = f[name].to_numpy(dtype=float)
            both = ~np.isnan(old) & ~np.isnan(ratio)
            differs = int(np.sum(both & ~np.isclose(old, ratio, rtol=1e-9, atol=0.0)))
            differs += int(np.sum(np.isnan(old) != np.isnan(ratio)))
            if differs:
                warnings.warn(
                    f"derived feature {name!r} overwritten; {differs} stored values disagreed with recomputation",
                    DerivationWarning,
                )
        f[name] = ratio
        if name not in out.numeric:
            out.numeric.append(name)
    return out


# --------------------------------------------------------------------------- transformer


def _quantile(x: np.ndarray, q: float) -> float:
    return float(np.quantile(x, q))


def _frame_hash(frame: pd.DataFrame) -> str:
    return sha256_hex(pd.util.hash_pandas_object(frame.astype(str), index=True).to_numpy().tobytes())


class CreditPreprocessor(BaseEstimator, TransformerMixin):
    """Impute, winsorize, log-transform, standardize and encode firm features.

    Per numeric feature the training missing fraction picks the imputer: median below
    ``low_missing_band``, k-nearest-neighbour up to ``high_missing_band``, and above that
    a univariate AUC screen decides between dropping the feature and KNN. Then
    values are clamped to training quantile bounds, optionally logged, and z-scored
    with the training mean and standard deviation.

    Parameters
    ----------
    low_missing_band, high_missing_band : float
        Missingness cut points selecting the imputation branch.
    knn_k : int
        Donors averaged by the KNN imputer.
    winsor_lo, winsor_hi : float
        Training quantiles used as clamp bounds.
    log_skew_threshold : float
        Minimum training skewness for the log transform (positive features only).
    woe_cardinality_threshold : int
        Nominal features with at most this many categories are one-hot encoded,
        larger ones get weight-of-evidence encoding.
    drop_auc_margin : float
        Heavily missing features are dropped when ``|AUC - 0.5|`` falls below this.
    ordinal_categories : dict, optional
        ``{feature: [level, ...]}`` for categorical features with a natural order;
        these are label encoded.
    derived_formulas : dict, optional
        Ratio definitions applied upstream, echoed into the fitted state for audit.
    """

    def __init__(
        self,
        low_missing_band=0.05,
        high_missing_band=0.25,
        knn_k=5,
        winsor_lo=0.01,
        winsor_hi=0.99,
        log_skew_threshold=2.0,
        woe_cardinality_threshold=10,
        drop_auc_margin=0.02,
        ordinal_categories=None,
        derived_formulas=None,
    ):
        self.low_missing_band = low_missing_band
        self.high_missing_band = high_missing_band
        self.knn_k = knn_k
        self.winsor_lo = winsor_lo
        self.winsor_hi = winsor_hi
        self.log_skew_threshold = log_skew_threshold
        self.woe_cardinality_threshold = woe_cardinality_threshold
        self.drop_auc_margin = drop_auc_margin
        self.ordinal_categories = ordinal_categories
        self.derived_formulas = derived_formulas

    @classmethod
    def from_policy(cls, policy: PreprocessPolicy, **kwargs) -> "CreditPreprocessor":
        return cls(**asdict(policy), **kwargs)

    @property
    def policy(self) -> PreprocessPolicy:
        return PreprocessPolicy(**{k: getattr(self, k) for k in PreprocessPolicy.__dataclass_fields__})

    # ------------------------------------------------------------------ fit

    def fit(self, X: ObservationSet, y=None, fold_id: str | None = None):
        policy = self.policy
        policy.validate()
        if len(X) == 0:
            raise ValueError("cannot fit a preprocessor on an empty training set")
        frame = X.frame
        y = None if y is None else np.asarray(y, dtype=float)
        if y is not None and len(y) != len(frame):
            raise ValueError(f"got {len(y)} targets for {len(frame)} training rows")
        audit = AuditLog()
        ordinal = self.ordinal_categories or {}

        raw = frame[X.numeric].to_numpy(dtype=float) if X.numeric else np.empty((len(frame), 0))
        n = raw.shape[0]
        numeric = {}
        for j, name in enumerate(X.numeric):
            col = raw[:, j]
            observed = col[~np.isnan(col)]
            frac = 1.0 - observed.size / n
            state = {"missing_fraction": frac}
            if observed.size == 0:
                state["imputation"] = {"kind": "dropped", "reason": "all missing"}
            elif frac < policy.low_missing_band:
                state["imputation"] = {"kind": "median", "value": float(np.median(observed))}
            elif frac <= policy.high_missing_band:
                state["imputation"] = {"kind": "knn", "k": policy.knn_k}
            else:
                if y is None:
                    raise ValueError(
                        f"feature {name!r} is {frac:.0%} missing; binary targets are required for the usefulness screen"
                    )
                mask = ~np.isnan(col)
                yy = y[mask]
                score = auc(yy, col[mask]) if 0 < yy.sum() < yy.size else 0.5
                state["screen_auc"] = score
                if abs(score - 0.5) < policy.drop_auc_margin:
                    state["imputation"] = {"kind": "dropped", "reason": f"uninformative (AUC {score:.4f})"}
                else:
                    state["imputation"] = {"kind": "knn", "k": policy.knn_k}
            numeric[name] = state

        # donor space: features surviving the missingness screen with spread on train
        donors = []
        donor_center, donor_scale = [], []
        for j, name in enumerate(X.numeric):
            if numeric[name]["imputation"]["kind"] == "dropped":
                continue
            obs_j = raw[:, j][~np.isnan(raw[:, j])]
            sd = float(obs_j.std()) if obs_j.size else 0.0
            if sd > 0:
                donors.append(name)
                donor_center.append(float(obs_j.mean()))
                donor_scale.append(sd)
        self.donor_features_ = donors
        self.donor_center_ = np.asarray(donor_center, dtype=float)
        self.donor_scale_ = np.asarray(donor_scale, dtype=float)
        donor_pos = [X.numeric.index(d) for d in donors]
        self.donor_matrix_ = (raw[:, donor_pos] - self.donor_center_) / self.donor_scale_ if donors else np.empty((n, 0))
        self.donor_values_ = {}

        for j, name in enumerate(X.numeric):
            state = numeric[name]
            if state["imputation"]["kind"] == "dropped":
                audit.dropped_features.append((name, state["imputation"]["reason"]))
                continue
            col = raw[:, j]
            observed = col[~np.isnan(col)]
            if state["imputation"]["kind"] == "knn":
                self.donor_values_[name] = col.copy()
            lo = _quantile(observed, policy.winsor_lo)
            hi = _quantile(observed, policy.winsor_hi)
            state["winsor_bounds"] = [lo, hi]
            clamped_obs = np.clip(observed, lo, hi)
            skew = _skewness(clamped_obs)
            state["log_applied"] = bool(lo > 0 and skew is not None and skew > policy.log_skew_threshold)
            filled = self._impute_column(name, state, col, raw, X.numeric)
            x = np.clip(filled, lo, hi)
            if state["log_applied"]:
                x = np.log(x)
            mu, sigma = float(x.mean()), float(x.std())
            if not sigma > 1e-12 * max(1.0, abs(mu)):
                state["imputation"] = {"kind": "dropped", "reason": "constant"}
                state.pop("winsor_bounds")
                state.pop("log_applied")
                self.donor_values_.pop(name, None)
                audit.dropped_features.append((name, "constant"))
                continue
            state["mu"], state["sigma"] = mu, sigma

        categorical = {}
        for name in X.categorical:
            col = self._categories(frame[name])
            if name in ordinal:
                categorical[name] = {"kind": "label", "order": [str(v) for v in ordinal[name]]}
                continue
            cats = sorted(set(col))
            if len(cats) <= policy.woe_cardinality_threshold:
                categorical[name] = {"kind": "onehot", "categories": cats}
                continue
            if y is None:
                raise ValueError(f"categorical feature {name!r} needs weight-of-evidence encoding but no targets were given")
            categorical[name] = {"kind": "woe", "table": _woe_table(col, y), "default_woe": 0.0}

        self.numeric_ = numeric
        self.categorical_ = categorical
        self.numeric_features_ = list(X.numeric)
        self.categorical_features_ = list(X.categorical)
        self.columns_ = self._output_columns()
        self.fitted_on_ = {"fold": fold_id, "data_hash": _frame_hash(frame)}
        self.audit_ = audit
        return self

    @staticmethod
    def _categories(series: pd.Series) -> list:
        return [MISSING_CATEGORY if (v is None or (isinstance(v, float) and math.isnan(v))) else str(v) for v in series]

    def _output_columns(self) -> list:
        cols = [n for n in self.numeric_features_ if self.numeric_[n]["imputation"]["kind"] != "dropped"]
        for name in self.categorical_features_:
            enc = self.categorical_[name]
            if enc["kind"] == "onehot":
                cols += [f"{name}={c}" for c in enc["categories"]]
            else:
                cols.append(name)
        return cols

    def _impute_column(self, name, state, col, raw, numeric_names) -> np.ndarray:
        out = col.copy()
        miss = np.isnan(out)
        if not miss.any():
            return out
        imp = state["imputation"]
        if imp["kind"] == "median":
            out[miss] = imp["value"]
            return out
        query = self._donor_coords(raw, numeric_names)
        out[miss] = self._knn(name, query[miss])
        return out

    def _donor_coords(self, raw, numeric_names) -> np.ndarray:
        pos = [numeric_names.index(d) for d in self.donor_features_]
        return (raw[:, pos] - self.donor_center_) / self.donor_scale_

    def _knn(self, name: str, queries: np.ndarray) -> np.ndarray:
        values = self.donor_values_[name]
        cand = ~np.isnan(values)
        cand_vals = values[cand]
        keep = [i for i, d in enumerate(self.donor_features_) if d != name]
        D = self.donor_matrix_[cand][:, keep]
        Q = queries[:, keep]
        k = int(self.knn_k)
        p = len(keep)
        fallback = float(np.median(cand_vals))
        out = np.empty(Q.shape[0])
        D_present = ~np.isnan(D)
        D_filled = np.where(D_present, D, 0.0)
        for r in range(Q.shape[0]):
            q = Q[r]
            qp = ~np.isnan(q)
            both = D_present & qp
            diff = np.where(both, D_filled - np.where(qp, q, 0.0), 0.0)
            count = both.sum(axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                dist = np.where(count > 0, np.sqrt((diff**2).sum(axis=1) * p / np.maximum(count, 1)), np.inf)
            finite = np.isfinite(dist)
            if p == 0 or not finite.any():
                out[r] = fallback
                continue
            order = np.argsort(np.where(finite, dist, np.inf), kind="stable")
            nearest = order[: min(k, int(finite.sum()))]
            out[r] = float(cand_vals[nearest].mean())
        return out

    # ------------------------------------------------------------------ transform

    def _check_fitted(self):
        if not hasattr(self, "columns_"):
            raise NotFittedError("CreditPreprocessor is not fitted yet; call fit first")

    def transform(self, X: ObservationSet) -> np.ndarray:
        return self.transform_matrix(X).values

    def transform_matrix(self, X: ObservationSet) -> FeatureMatrix:
        self._check_fitted()
        frame = X.frame
        needed = self.numeric_features_ + self.categorical_features_
        unknown = [c for c in needed if c not in frame.columns]
        if unknown:
            raise KeyError(f"columns required by the fitted preprocessor are missing: {unknown}")
        raw = frame[self.numeric_features_].to_numpy(dtype=float) if self.numeric_features_ else np.empty((len(frame), 0))
        blocks = []
        for j, name in enumerate(self.numeric_features_):
            state = self.numeric_[name]
            if state["imputation"]["kind"] == "dropped":
                continue
            x = self._impute_column(name, state, raw[:, j], raw, self.numeric_features_)
            if np.isnan(x).any():
                raise ValueError(f"feature {name!r} still has missing values after imputation")
            lo, hi = state["winsor_bounds"]
            x = np.clip(x, lo, hi)
            if state["log_applied"]:
                x = np.log(x)
            blocks.append(((x - state["mu"]) / state["sigma"])[:, None])
        for name in self.categorical_features_:
            enc = self.categorical_[name]
            col = self._categories(frame[name])
            if enc["kind"] == "label":
                pos = {c: i for i, c in enumerate(enc["order"])}
                blocks.append(np.array([pos.get(c, -1) for c in col], dtype=float)[:, None])
            elif enc["kind"] == "onehot":
                cats = enc["categories"]
                block = np.zeros((len(col), len(cats)))
                idx = {c: i for i, c in enumerate(cats)}
                for r, c in enumerate(col):
                    if c in idx:
                        block[r, idx[c]] = 1.0
                blocks.append(block)
            else:
                table = enc["table"]
                blocks.append(np.array([table.get(c, enc["default_woe"]) for c in col], dtype=float)[:, None])
        values = np.hstack(blocks) if blocks else np.empty((len(frame), 0))
        keys = list(zip(frame["firm_id"], frame["agency"], [str(p) for p in frame["period"]])) if "firm_id" in frame else []
        return FeatureMatrix(list(self.columns_), values, keys)

    # ------------------------------------------------------------------ persistence

    def to_dict(self) -> dict:
        self._check_fitted()

        def enc(a):
            return [[None if math.isnan(v) else float(v) for v in row] for row in np.asarray(a)]

        return {
            "format": "credscore.preprocessor",
            "version": FORMAT_VERSION,
            "params": self.get_params(),
            "numeric_features": self.numeric_features_,
            "categorical_features": self.categorical_features_,
            "numeric": self.numeric_,
            "categorical": self.categorical_,
            "columns": self.columns_,
            "donor_features": self.donor_features_,
            "donor_center": self.donor_center_.tolist(),
            "donor_scale": self.donor_scale_.tolist(),
            "donor_matrix": enc(self.donor_matrix_),
            "donor_values": {k: [None if math.isnan(v) else float(v) for v in vals] for k, vals in self.donor_values_.items()},
            "fitted_on": self.fitted_on_,
            "audit": self.audit_.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "CreditPreprocessor":
        if d.get("format") != "credscore.preprocessor" or d.get("version") != FORMAT_VERSION:
            raise ValueError("not a credscore preprocessor document of a supported version")
        self = cls(**d["params"])

        def dec(rows, width):
            a = np.array([[np.nan if v is None else v for v in row] for row in rows], dtype=float)
            return a.reshape(-1, width)

        self.numeric_features_ = list(d["numeric_features"])
        self.categorical_features_ = list(d["categorical_features"])
        self.numeric_ = d["numeric"]
        self.categorical_ = d["categorical"]
        self.columns_ = list(d["columns"])
        self.donor_features_ = list(d["donor_features"])
        self.donor_center_ = np.asarray(d["donor_center"], dtype=float)
        self.donor_scale_ = np.asarray(d["donor_scale"], dtype=float)
        self.donor_matrix_ = dec(d["donor_matrix"], len(self.donor_features_))
        self.donor_values_ = {k: np.array([np.nan if v is None else v for v in vals], dtype=float) for k, vals in d["donor_values"].items()}
        self.fitted_on_ = d["fitted_on"]
        a = d["audit"]
        self.audit_ = AuditLog(
            a["exact_duplicates_removed"],
            [tuple(t) for t in a["near_duplicates_resolved"]],
            [tuple(t) for t in a["dropped_features"]],
        )
        return self

    @classmethod
    def from_json(cls, text: str) -> "CreditPreprocessor":
        return cls.from_dict(json.loads(text))

    def state_hash(self) -> str:
        return sha256_hex(canonical_json(self.to_dict()))


def _woe_table(categories: list, y: np.ndarray) -> dict:
    """ln(share of positives / share of negatives) per category, +0.5 smoothing on both counts."""
    cats = sorted(set(categories))
    y = np.asarray(y, dtype=float)
    cat_arr = np.asarray(categories, dtype=object)
    pos = {c: float(np.sum(y[cat_arr == c] == 1)) for c in cats}
    neg = {c: float(np.sum(y[cat_arr == c] == 0)) for c in cats}
    k = len(cats)
    total_pos = sum(pos.values()) + 0.5 * k
    total_neg = sum(neg.values()) + 0.5 * k
    return {c: math.log(((pos[c] + 0.5) / total_pos) / ((neg[c] + 0.5) / total_neg)) for c in cats}


def fit_preprocessor(train: ObservationSet, policy: PreprocessPolicy | None = None, binary_targets=None, **kwargs) -> tuple:
    fp = CreditPreprocessor.from_policy(policy or PreprocessPolicy(), **kwargs).fit(train, binary_targets)
    return fp, fp.audit_


def apply_preprocessor(fp: CreditPreprocessor, obs: ObservationSet) -> FeatureMatrix:
    return fp.transform_matrix(obs)
