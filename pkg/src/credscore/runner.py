"""End-to-end per-agency experiment: ingest, folds, tuning, ensembles, calibration,
evaluation, explanations and drift, recorded in a hashable run manifest.

Output layout under ``out_dir``::

    manifest.json
    agencies/<agency-slug>/fold_<i>/preprocessor.json
    agencies/<agency-slug>/fold_<i>/audit.json                 dedup + dropped features
    agencies/<agency-slug>/fold_<i>/<target>_<preset>.json     fitted boosters
    report/classification_table.csv
    report/regression_table.csv
    report/metrics/<agency-slug>.json
    report/importance.json
    report/psi.json
    report/plots/<agency-slug>_<target>_{roc,calibration,pdp_<feature>}.csv
"""

from __future__ import annotations

import json
import logging
import re
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from ._utils import _json_default, atomic_write_text, derive_seed, hash_json, write_json
from .explain import (
    ShapMatrix,
    aggregate_importance,
    partial_dependence,
    permutation_importance,
    ranking_correlation,
    tree_shap,
)
from .folds import PeriodIndex, check_leakage, materialize_fold, plan_folds
from .gbdt import GBDTClassifier, GBDTRegressor, sigmoid
from .ingest import AGENCIES, SchemaMap, load_observations, summarize
from .metrics import (
    auc,
    bootstrap_ci,
    calibration_curve,
    classification_metrics,
    delong_test,
    log_loss,
    psi,
    regression_metrics,
    rmse,
    roc_curve_points,
)
from .preprocess import CreditPreprocessor, PreprocessPolicy, deduplicate, derive_features
from .targets import DEFAULT_SCALE, RatingScale, build_targets
from .tune import TABLE2_SPACES, IsotonicMap, fit_isotonic, fit_logistic_calibration, optimize_weights, run_study

log = logging.getLogger(__name__)

MANIFEST_FORMAT = "credscore.manifest"
MANIFEST_VERSION = 1
TARGET_MODES = ("binary", "continuous", "both")
STAGES = ("ingest", "plan", "tune", "train", "evaluate", "explain", "drift")
# stages an agency record must have completed before a report can be emitted
REPORT_STAGES = ("plan", "tune", "train", "evaluate", "explain", "drift")


class ConfigError(ValueError):
    """Invalid or unreadable run configuration."""


class IncompleteManifestError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything needed to reproduce a run.

    ``max_iterations`` caps the boosting rounds any preset may use (the symmetric
    search space otherwise reaches 2000); ``default_iterations`` is the round budget
    for presets whose search space does not tune it, with early stopping on the
    validation period deciding the effective count.
    """

    data_path: str
    schema_path: str
    out_dir: str = "runs/latest"
    agencies: list = field(default_factory=lambda: list(AGENCIES))
    target: str = "both"
    k: int = 5
    presets: list = field(default_factory=lambda: list(TABLE2_SPACES))
    trials: int = 50
    seed: int = 0
    max_iterations: int | None = 500
    default_iterations: int = 1000
    early_stopping_rounds: int = 50
    histogram_bins: int = 64
    n_startup: int = 10
    threshold: float = 0.5
    bootstrap_resamples: int = 1000
    permutation_repeats: int = 5
    pdp_features: int = 3
    pdp_grid: int = 10
    workers: int = 1
    delimiter: str = ","
    rating_scale: dict | None = None
    preprocess: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not self.agencies:
            raise ConfigError("at least one agency is required")
        if not self.presets:
            raise ConfigError("at least one preset is required")
        unknown = [p for p in self.presets if p not in TABLE2_SPACES]
        if unknown:
            raise ConfigError(f"unknown presets {unknown}; choose from {list(TABLE2_SPACES)}")
        if self.target not in TARGET_MODES:
            raise ConfigError(f"target must be one of {TARGET_MODES}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1 or null")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            PreprocessPolicy(**self.preprocess).validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"preprocess: {exc}") from None
        if self.rating_scale is not None:
            try:
                RatingScale.from_config(self.rating_scale)
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"rating_scale: {exc}") from None

    @property
    def targets(self) -> tuple:
        return ("binary", "continuous") if self.target == "both" else (self.target,)

    @property
    def scale(self) -> RatingScale:
        return DEFAULT_SCALE if self.rating_scale is None else RatingScale.from_config(self.rating_scale)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"unknown config keys: {extra}")
        try:
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        if base_dir is not None:
            # relative paths in a config file are relative to that file
            for attr in ("data_path", "schema_path", "out_dir"):
                p = Path(getattr(cfg, attr))
                if not p.is_absolute():
                    setattr(cfg, attr, str(Path(base_dir) / p))
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d, base_dir=Path(path).resolve().parent)


def agency_slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


# --------------------------------------------------------------------------- ensemble


class WeightedEnsemble:
    """Convex blend of fitted boosters exposing the model protocol used by explainers.

    For classification the blend is over positive-class probabilities; for
    regression over predictions.
    """

    def __init__(self, models, weights, kind: str):
        self.models = list(models)
        self.weights = np.asarray(weights, dtype=float)
        self.kind = kind
        self.n_features_in_ = self.models[0].n_features_in_
        self.feature_names_ = list(self.models[0].feature_names_)

    def member_scores(self, X) -> np.ndarray:
        if self.kind == "binary":
            return np.array([sigmoid(m.predict_raw(X)) for m in self.models])
        return np.array([m.predict(X) for m in self.models])

    def predict_raw(self, X) -> np.ndarray:
        return self.weights @ self.member_scores(X)

    predict = predict_raw

    def shap(self, X) -> ShapMatrix:
        """Weight-averaged member attributions (log-odds scale for classification)."""
        parts = [tree_shap(m, X) for m in self.models]
        phi = sum(w * p.phi for w, p in zip(self.weights, parts))
        base = float(sum(w * p.base_value for w, p in zip(self.weights, parts)))
        return ShapMatrix(base, phi, parts[0].feature_names)


# --------------------------------------------------------------------------- per fold


def _booster(target: str, preset: str, params: dict, cfg: RunConfig, seed: int):
    kw = dict(
        growth=preset,
        iterations=cfg.default_iterations,
        early_stopping_rounds=cfg.early_stopping_rounds,
        histogram_bins=cfg.histogram_bins,
        seed=seed,
    )
    kw.update(params)
    if preset == "leafwise":
        kw.setdefault("max_depth", None)
    if cfg.max_iterations is not None:
        kw["iterations"] = min(int(kw["iterations"]), cfg.max_iterations)
    cls = GBDTClassifier if target == "binary" else GBDTRegressor
    return cls(**kw)


def _val_objective(target, model, Xv, yv) -> float:
    if target == "binary":
        return log_loss(yv, sigmoid(model.predict_raw(Xv)))
    return rmse(yv, model.predict(Xv))


def _tune_preset(target, preset, Xtr, ytr, Xva, yva, cfg, key) -> tuple:
    """TPE study for one preset; returns (best model, best params, study state)."""
    best = {"value": np.inf, "model": None}
    gbdt_seed = derive_seed(cfg.seed, "gbdt", *key)

    def objective(params):
        model = _booster(target, preset, params, cfg, gbdt_seed)
        model.fit(Xtr, ytr, eval_set=(Xva, yva))
        value = _val_objective(target, model, Xva, yva)
        if value < best["value"]:
            best["value"], best["model"] = value, model
        return value

    params, state = run_study(
        objective,
        TABLE2_SPACES[preset],
        cfg.trials,
        seed=derive_seed(cfg.seed, "tpe", *key),
        n_startup=cfg.n_startup,
    )
    return best["model"], params, state


def _classification_eval(y, score, iso, threshold) -> dict:
    probs = iso.apply(score)
    rep = classification_metrics(y, probs, threshold).to_dict()
    # ranking quality is measured on the uncalibrated blend: the isotonic step map ties scores
    rep["auc_calibrated"] = rep["auc"]
    rep["auc"] = auc(y, score) if 0 < y.sum() < y.size else None
    return rep


def _require_both(y, what):
    if not 0 < np.sum(y) < len(y):
        raise ValueError(f"{what} contains a single rating class")


def _fit_target(target, fold_no, fm, ys, ybin, cfg, agency, fold_dir, stages) -> tuple:
    """Tune, blend, calibrate and evaluate one target on one fold."""
    Xtr, Xva, Xte = fm["train"], fm["val"], fm["test"]
    ytr, yva, yte = ys["train"], ys["val"], ys["test"]
    if target == "binary":
        _require_both(ytr, f"fold {fold_no} training split")
        _require_both(yva, f"fold {fold_no} validation split")
    rec: dict = {"studies": {}, "best_params": {}}
    models = []
    for preset in cfg.presets:
        key = (agency, fold_no, target, preset)
        model, params, state = _tune_preset(target, preset, Xtr, ytr, Xva, yva, cfg, key)
        rec["studies"][preset] = state.to_dict()
        rec["best_params"][preset] = params
        rec.setdefault("best_iterations", {})[preset] = int(model.best_iteration_)
        models.append(model)
    if "train" not in stages:
        return rec, None

    for preset, model in zip(cfg.presets, models):
        path = fold_dir / f"{target}_{preset}.json"
        atomic_write_text(path, model.to_json())
        rec.setdefault("model_hashes", {})[preset] = model.model_hash()
        rec.setdefault("model_files", {})[preset] = str(path)

    kind = target
    probe = WeightedEnsemble(models, np.ones(len(models)) / len(models), kind)
    val_scores = probe.member_scores(Xva)
    weights = optimize_weights(val_scores, yva, metric="auc" if kind == "binary" else "rmse")
    ens = WeightedEnsemble(models, weights.weights, kind)
    rec["ensemble"] = {"presets": list(cfg.presets), **weights.to_dict()}
    ens_val = weights.combine(val_scores)

    if kind == "binary":
        iso = fit_isotonic(ens_val, yva)
        rec["calibration"] = {"method": "isotonic", **iso.to_dict()}
    else:
        junk_val = 1.0 - ybin["val"]
        try:
            pd_cal = fit_logistic_calibration(ens_val, junk_val)
            rec["calibration"] = {"method": "logistic_pd", **pd_cal.to_dict()}
        except ValueError as exc:
            pd_cal = None
            rec["calibration"] = {"method": "logistic_pd", "skipped": str(exc)}
    if "evaluate" not in stages:
        return rec, ens

    members_test = ens.member_scores(Xte)
    s_tr, s_te = ens.predict_raw(Xtr), weights.combine(members_test)
    if kind == "binary":
        rec["train"] = _classification_eval(ytr, s_tr, iso, cfg.threshold)
        rec["test"] = _classification_eval(yte, s_te, iso, cfg.threshold)
        rec["test_members_auc"] = {}
        if 0 < yte.sum() < yte.size:
            for preset, s in zip(cfg.presets, members_test):
                rec["test_members_auc"][preset] = auc(yte, s)
                if len(models) > 1:
                    rec.setdefault("delong_vs_members", {})[preset] = delong_test(yte, s_te, s).to_dict()
    else:
        rec["train"] = regression_metrics(ytr, s_tr).to_dict()
        rec["test"] = regression_metrics(yte, s_te).to_dict()
        rec["test_members_rmse"] = {p: rmse(yte, s) for p, s in zip(cfg.presets, members_test)}
        junk_test = 1.0 - ybin["test"]
        if pd_cal is not None and 0 < junk_test.sum() < junk_test.size:
            rec["test_pd_auc"] = auc(junk_test, pd_cal.apply(s_te))
    return rec, ens


def _holdout_extras(target, ens, rec, Xte, yte, cfg, agency) -> dict:
    """Plot data and bootstrap interval for the holdout fold."""
    out: dict = {}
    s_te = ens.predict_raw(Xte)
    if target == "binary" and 0 < yte.sum() < yte.size:
        fpr, tpr, thr = roc_curve_points(yte, s_te)
        out["roc"] = {"fpr": fpr.tolist(), "tpr": tpr.tolist(), "threshold": [None] + thr[1:].tolist()}
        iso = IsotonicMap.from_dict(rec["calibration"])
        out["calibration_curve"] = calibration_curve(yte, iso.apply(s_te))
        if cfg.bootstrap_resamples:
            ci = bootstrap_ci(
                auc,
                (yte, s_te),
                n_resamples=cfg.bootstrap_resamples,
                seed=derive_seed(cfg.seed, "bootstrap", agency, target),
            )
            out["test_auc_ci"] = ci.to_dict()
    elif target == "continuous" and cfg.bootstrap_resamples and yte.size >= 2:
        ci = bootstrap_ci(
            rmse,
            (yte, s_te),
            n_resamples=cfg.bootstrap_resamples,
            seed=derive_seed(cfg.seed, "bootstrap", agency, target),
        )
        out["test_rmse_ci"] = ci.to_dict()
    return out


def _explain(target, ens, Xte, yte, cfg, agency) -> dict:
    shap = ens.shap(Xte)
    ranking = aggregate_importance([shap], provenance=[f"tree_shap:{target}:holdout"])
    out = {"shap_ranking": ranking.to_dict(), "shap_base_value": shap.base_value}
    metric = "auc" if target == "binary" else "rmse"
    if metric == "rmse" or 0 < yte.sum() < yte.size:
        perm = permutation_importance(
            ens, Xte, yte, metric=metric, repeats=cfg.permutation_repeats,
            seed=derive_seed(cfg.seed, "permutation", agency, target),
        )
        out["permutation_ranking"] = perm.to_dict()
        out["shap_permutation_correlation"] = ranking_correlation(ranking, perm)
    X = Xte.values
    curves = []
    for name in ranking.top(cfg.pdp_features):
        j = ens.feature_names_.index(name)
        grid = np.unique(np.quantile(X[:, j], np.linspace(0.05, 0.95, cfg.pdp_grid)))
        curves.append(partial_dependence(ens, j, grid, Xte).to_dict())
    out["pdp"] = curves
    return out, ranking


# --------------------------------------------------------------------------- per agency


def _run_agency(agency: str, obs_all, cfg: RunConfig, stages: frozenset) -> tuple:
    timings: dict = {}
    stage = "ingest"
    try:
        t0 = time.perf_counter()
        sub = obs_all.for_agency(agency)
        if len(sub) == 0:
            return {"status": "no data", "n_obs": 0}, timings
        rec: dict = {"status": "ok", "stages_completed": []}
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            sub, audit = deduplicate(sub)
            sub = derive_features(sub)
        rec["ingest_warnings"] = sorted({str(w.message) for w in caught})
        known = sub.frame["rating"].isin(cfg.scale.index).to_numpy()
        rec["n_obs"] = int(len(sub))
        rec["n_unknown_rating_dropped"] = int((~known).sum())
        rec["audit"] = audit.to_dict()
        sub = sub.subset(sub.frame.index[known])
        rec["stages_completed"].append("ingest")
        timings["ingest"] = time.perf_counter() - t0

        stage = "plan"
        t0 = time.perf_counter()
        pidx = PeriodIndex.from_observations(sub)
        k_used = min(cfg.k, len(pidx.periods) - 2)
        if k_used < 1:
            raise ValueError(f"only {len(pidx.periods)} distinct periods; at least 3 are needed")
        plan = plan_folds(pidx, k_used)
        leak = check_leakage(plan, pidx)
        if not leak.passed:
            raise ValueError("leakage check failed: " + "; ".join(leak.violations))
        rec["plan"] = {**plan.to_dict(), "k_requested": cfg.k, "k_used": k_used}
        rec["leakage"] = {"passed": True, "violations": []}
        rec["stages_completed"].append("plan")
        timings["plan"] = time.perf_counter() - t0
        if not ({"tune", "drift"} & stages):
            return rec, timings

        slug = agency_slug(agency)
        scale = cfg.scale
        policy = PreprocessPolicy(**cfg.preprocess)
        folds_out = []
        holdout_state = None
        t_fit = time.perf_counter()
        for fold_no, fold in enumerate(plan.folds, start=1):
            stage = "preprocess"
            parts = dict(zip(("train", "val", "test"), materialize_fold(fold, sub)))
            split_obs = {k: sub.subset(v) for k, v in parts.items()}
            ratings = {k: o.frame["rating"].tolist() for k, o in split_obs.items()}
            ybin = {k: build_targets(r, "binary", scale) for k, r in ratings.items()}
            fp = CreditPreprocessor.from_policy(policy).fit(
                split_obs["train"], ybin["train"], fold_id=f"{agency}/{fold_no}"
            )
            fold_dir = Path(cfg.out_dir) / "agencies" / slug / f"fold_{fold_no}"
            atomic_write_text(fold_dir / "preprocessor.json", fp.to_json())
            write_json(fold_dir / "audit.json", audit.merge(fp.audit_).to_dict())
            fm = {k: fp.transform_matrix(o) for k, o in split_obs.items()}
            frec: dict = {
                "fold": fold.to_dict(),
                "rows": {k: len(v) for k, v in parts.items()},
                "preprocessor_hash": fp.state_hash(),
                "preprocessor_file": str(fold_dir / "preprocessor.json"),
                "columns": list(fp.columns_),
                "dropped_features": fp.audit_.dropped_features,
            }
            if "drift" in stages:
                frec["psi"] = psi(fm["train"].values, fm["test"].values, feature_names=fp.columns_).to_dict()
            ensembles = {}
            if "tune" in stages:
                stage = "tune"
                for target in cfg.targets:
                    ys = ybin if target == "binary" else {
                        k: build_targets(r, "continuous", scale) for k, r in ratings.items()
                    }
                    trec, ens = _fit_target(target, fold_no, fm, ys, ybin, cfg, agency, fold_dir, stages)
                    frec[target] = trec
                    ensembles[target] = (ens, ys)
            folds_out.append(frec)
            holdout_state = (fm, ensembles)
        timings["folds"] = time.perf_counter() - t_fit
        rec["folds"] = folds_out
        for s in ("tune", "train", "evaluate"):
            if s in stages:
                rec["stages_completed"].append(s)

        last = folds_out[-1]
        fm, ensembles = holdout_state
        if "evaluate" in stages:
            stage = "evaluate"
            rec["holdout"] = {"period": plan.final_holdout}
            rec["aggregate"] = {}
            for target in cfg.targets:
                ens, ys = ensembles[target]
                h = {"train": last[target]["train"], "test": last[target]["test"]}
                h.update(_holdout_extras(target, ens, last[target], fm["test"], ys["test"], cfg, agency))
                rec["holdout"][target] = h
                rec["aggregate"][target] = _fold_means([f[target]["test"] for f in folds_out])

        if "explain" in stages:
            stage = "explain"
            t0 = time.perf_counter()
            rec["explain"] = {}
            ranks = {}
            for target in cfg.targets:
                ens, ys = ensembles[target]
                rec["explain"][target], ranks[target] = _explain(target, ens, fm["test"], ys["test"], cfg, agency)
            if len(ranks) == 2:
                rec["explain"]["cross_task_rank_correlation"] = ranking_correlation(ranks["binary"], ranks["continuous"])
            rec["stages_completed"].append("explain")
            timings["explain"] = time.perf_counter() - t0

        if "drift" in stages:
            rec["drift"] = {"holdout": last["psi"]}
            rec["stages_completed"].append("drift")
        return rec, timings
    except Exception as exc:  # one agency failing must not stop the others
        log.error("agency %s failed at stage %s: %s", agency, stage, exc)
        return {"status": "failed", "stage": stage, "error": f"{type(exc).__name__}: {exc}"}, timings


def _fold_means(reports: list) -> dict:
    out = {}
    for key in reports[0]:
        vals = [r[key] for r in reports if isinstance(r.get(key), (int, float)) and not isinstance(r.get(key), bool)]
        if vals:
            out[key] = float(np.mean(vals))
    out["n_folds"] = len(reports)
    return out


# --------------------------------------------------------------------------- experiment


def _resolve_stages(stages) -> frozenset:
    s = set(STAGES if stages is None else stages)
    unknown = s - set(STAGES)
    if unknown:
        raise ConfigError(f"unknown stages {sorted(unknown)}")
    if "explain" in s or "evaluate" in s:
        s.add("train")
    if "train" in s:
        s.add("tune")
    return frozenset(s | {"ingest", "plan"})


def manifest_hash(manifest: dict) -> str:
    """Hash of everything except wall-clock timings and the hash field itself."""
    return hash_json({k: v for k, v in manifest.items() if k not in ("timings", "manifest_hash")})


def load_dataset(cfg: RunConfig):
    try:
        schema = SchemaMap.from_json(cfg.schema_path)
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ConfigError(f"cannot read schema {cfg.schema_path}: {exc}") from None
    try:
        return load_observations(cfg.data_path, schema, cfg.delimiter)
    except OSError as exc:
        raise ConfigError(f"cannot read data {cfg.data_path}: {exc}") from None


def run_experiment(config: RunConfig, stages=None, write: bool = True) -> dict:
    """Run the requested stages for every configured agency and return the manifest.

    ``stages`` defaults to all of them; requesting a later stage pulls in the ones it
    depends on. Sub-seeds derive from ``config.seed`` and the stage key, so agencies
    can run in worker processes without changing results.
    """
    config.validate()
    stages = _resolve_stages(stages)
    t_start = time.perf_counter()
    obs, content_hash = load_dataset(config)
    Path(config.out_dir).mkdir(parents=True, exist_ok=True)

    if config.workers > 1 and len(config.agencies) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_agency, a, obs, config, stages) for a in config.agencies]
            results = [f.result() for f in futures]
    else:
        results = [_run_agency(a, obs, config, stages) for a in config.agencies]

    agencies = {a: r for a, (r, _) in zip(config.agencies, results)}
    timings = {a: t for a, (_, t) in zip(config.agencies, results)}
    timings["total_seconds"] = time.perf_counter() - t_start
    artifacts = sorted(
        str(p.relative_to(config.out_dir))
        for p in Path(config.out_dir).glob("agencies/**/*.json")
        if any(p.parts[-3] == agency_slug(a) for a in agencies)
    )
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "package_version": __version__,
        "config": config.to_dict(),
        "stages": sorted(stages, key=STAGES.index),
        "dataset": {"path": str(config.data_path), "content_hash": content_hash, "n_rows": len(obs)},
        "agencies": agencies,
        "artifacts": artifacts,
        "timings": timings,
    }
    manifest = json.loads(json.dumps(manifest, default=_json_default))
    manifest["manifest_hash"] = manifest_hash(manifest)
    if write:
        write_json(Path(config.out_dir) / "manifest.json", manifest)
    return manifest


def failed_agencies(manifest: dict) -> list:
    return [a for a, r in manifest["agencies"].items() if r.get("status") != "ok"]


def summarize_dataset(config: RunConfig) -> dict:
    obs, content_hash = load_dataset(config)
    report = summarize(obs)
    return {"content_hash": content_hash, "summary": report.to_dict(), "text": report.to_text()}


# --------------------------------------------------------------------------- report


@dataclass
class ReportBundle:
    classification_table: pd.DataFrame | None
    regression_table: pd.DataFrame | None
    importance: dict
    calibration_curves: dict
    psi: dict
    files: list
    notices: list


CLASSIFICATION_COLUMNS = ["agency", "train_accuracy", "test_accuracy", "train_auc", "test_auc", "fold_mean_test_accuracy", "fold_mean_test_auc", "n_folds"]
REGRESSION_COLUMNS = ["agency", "train_rmse", "test_rmse", "train_r2", "test_r2", "fold_mean_test_rmse", "fold_mean_test_r2", "n_folds"]


def _agency_order(names) -> list:
    known = [a for a in AGENCIES if a in names]
    return known + sorted(a for a in names if a not in AGENCIES)


def _check_complete(manifest: dict) -> list:
    for key in ("config", "agencies", "dataset"):
        if key not in manifest:
            raise IncompleteManifestError(f"manifest has no '{key}' section")
    ok = [a for a, r in manifest["agencies"].items() if r.get("status") == "ok"]
    for a in ok:
        done = manifest["agencies"][a].get("stages_completed", [])
        for s in REPORT_STAGES:
            if s not in done:
                raise IncompleteManifestError(f"agency {a!r}: stage '{s}' missing from manifest")
    return _agency_order(ok)


def _write_csv(path: Path, frame: pd.DataFrame, files: list):
    atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))
    files.append(str(path))


def emit_report(manifest: dict, out_dir=None) -> ReportBundle:
    """Write agency tables, metric JSONs and plot-data files for a complete manifest."""
    agencies = _check_complete(manifest)
    cfg = manifest["config"]
    out = Path(out_dir or cfg["out_dir"]) / "report"
    targets = ("binary", "continuous") if cfg["target"] == "both" else (cfg["target"],)
    files, notices = [], []
    for a, r in manifest["agencies"].items():
        if r.get("status") != "ok":
            notices.append(f"{a}: {r.get('status')}" + (f" at {r['stage']}: {r['error']}" if "error" in r else ""))

    cls_rows, reg_rows = [], []
    importance, calib, psi_out = {}, {}, {}
    for a in agencies:
        r = manifest["agencies"][a]
        slug = agency_slug(a)
        if "binary" in targets:
            h, m = r["holdout"]["binary"], r["aggregate"]["binary"]
            cls_rows.append([a, h["train"]["accuracy"], h["test"]["accuracy"], h["train"]["auc"], h["test"]["auc"],
                             m.get("accuracy"), m.get("auc"), m["n_folds"]])
            if "roc" in h:
                _write_csv(out / "plots" / f"{slug}_binary_roc.csv", pd.DataFrame(h["roc"]), files)
            if "calibration_curve" in h:
                calib[a] = h["calibration_curve"]
                _write_csv(out / "plots" / f"{slug}_binary_calibration.csv", pd.DataFrame(h["calibration_curve"]), files)
        if "continuous" in targets:
            h, m = r["holdout"]["continuous"], r["aggregate"]["continuous"]
            reg_rows.append([a, h["train"]["rmse"], h["test"]["rmse"], h["train"]["r2"], h["test"]["r2"],
                             m.get("rmse"), m.get("r2"), m["n_folds"]])
        importance[a] = {}
        for t in targets:
            ex = r["explain"][t]
            importance[a][t] = {k: ex[k] for k in ("shap_ranking", "permutation_ranking", "shap_permutation_correlation") if k in ex}
            for curve in ex["pdp"]:
                fname = f"{slug}_{t}_pdp_{agency_slug(curve['feature'])}.csv"
                _write_csv(out / "plots" / fname, pd.DataFrame({"grid": curve["grid"], "response": curve["response"]}), files)
        if "cross_task_rank_correlation" in r["explain"]:
            importance[a]["cross_task_rank_correlation"] = r["explain"]["cross_task_rank_correlation"]
        psi_out[a] = r["drift"]["holdout"]
        metrics_doc = {"holdout": r["holdout"], "fold_mean": r["aggregate"], "folds": [
            {t: {"train": f[t]["train"], "test": f[t]["test"]} for t in targets} | {"fold": f["fold"]} for f in r["folds"]
        ]}
        p = out / "metrics" / f"{slug}.json"
        write_json(p, metrics_doc)
        files.append(str(p))

    cls_table = reg_table = None
    if "binary" in targets:
        cls_table = pd.DataFrame(cls_rows, columns=CLASSIFICATION_COLUMNS)
        _write_csv(out / "classification_table.csv", cls_table, files)
    else:
        notices.append("classification table omitted: run has no binary target")
    if "continuous" in targets:
        reg_table = pd.DataFrame(reg_rows, columns=REGRESSION_COLUMNS)
        _write_csv(out / "regression_table.csv", reg_table, files)
    else:
        notices.append("regression table omitted: run has no continuous target")
    for name, doc in (("importance.json", importance), ("psi.json", psi_out)):
        write_json(out / name, doc)
        files.append(str(out / name))
    if notices:
        atomic_write_text(out / "notices.txt", "\n".join(notices) + "\n")
        files.append(str(out / "notices.txt"))
    for n in notices:
        log.warning(n)
    return ReportBundle(cls_table, reg_table, importance, calib, psi_out, files, notices)
