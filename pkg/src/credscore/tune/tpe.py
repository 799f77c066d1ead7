"""Tree-structured Parzen estimator search over bounded hyperparameter spaces."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm, qmc

from .._utils import derive_seed, hash_json

log = logging.getLogger(__name__)

SCALES = ("int", "log", "linear")


@dataclass(frozen=True)
class Dimension:
    name: str
    low: float
    high: float
    scale: str = "linear"

    def __post_init__(self):
        if self.scale not in SCALES:
            raise ValueError(f"scale must be one of {SCALES}")
        if not self.low < self.high:
            raise ValueError(f"{self.name}: lower bound must be below upper bound")
        if self.scale == "log" and self.low <= 0:
            raise ValueError(f"{self.name}: log-scaled bounds must be positive")

    @property
    def internal_bounds(self) -> tuple:
        if self.scale == "log":
            return math.log(self.low), math.log(self.high)
        if self.scale == "int":
            return self.low - 0.5, self.high + 0.5
        return float(self.low), float(self.high)

    def to_external(self, u: float):
        if self.scale == "log":
            return float(min(max(math.exp(u), self.low), self.high))
        if self.scale == "int":
            return int(min(max(round(u), self.low), self.high))
        return float(min(max(u, self.low), self.high))

    def to_internal(self, v) -> float:
        return math.log(v) if self.scale == "log" else float(v)


@dataclass(frozen=True)
class SearchSpace:
    name: str
    dims: tuple

    def __post_init__(self):
        if not self.dims:
            raise ValueError("search space needs at least one dimension")

    def contains(self, params: dict) -> bool:
        return all(d.low <= params[d.name] <= d.high for d in self.dims)


TABLE2_SPACES = {
    "symmetric": SearchSpace(
        "symmetric",
        (
            Dimension("iterations", 100, 2000, "int"),
            Dimension("learning_rate", 1e-4, 0.3, "log"),
            Dimension("max_depth", 4, 10, "int"),
        ),
    ),
    "leafwise": SearchSpace(
        "leafwise",
        (
            Dimension("num_leaves", 31, 512, "int"),
            Dimension("learning_rate", 1e-4, 0.3, "log"),
            Dimension("feature_fraction", 0.5, 1.0, "linear"),
        ),
    ),
    "depthwise": SearchSpace(
        "depthwise",
        (
            Dimension("max_depth", 3, 12, "int"),
            Dimension("learning_rate", 1e-4, 0.3, "log"),
            Dimension("subsample", 0.5, 1.0, "linear"),
        ),
    ),
}


@dataclass
class StudyState:
    seed: int = 0
    gamma: float = 0.25
    n_startup: int = 10
    n_candidates: int = 24
    trials: list = field(default_factory=list)

    def completed(self) -> list:
        return [t for t in self.trials if t["status"] == "ok"]

    def best(self) -> dict | None:
        done = self.completed()
        if not done:
            return None
        return min(done, key=lambda t: (t["value"], t["number"]))

    def to_dict(self) -> dict:
        return asdict(self)

    def state_hash(self) -> str:
        return hash_json(self.to_dict())


def _startup_point(space: SearchSpace, seed: int, i: int) -> dict:
    sampler = qmc.Halton(d=len(space.dims), scramble=True, seed=seed)
    u = sampler.random(i + 1)[i]
    out = {}
    for d, ui in zip(space.dims, u):
        lo, hi = d.internal_bounds
        out[d.name] = d.to_external(lo + ui * (hi - lo))
    return out


class _Parzen:
    """Mixture of truncated normals on the internal scale, with a broad prior component."""

    def __init__(self, points, lo, hi):
        pts = np.asarray(points, dtype=float)
        mus = np.r_[pts, (lo + hi) / 2.0]
        order = np.argsort(mus, kind="stable")
        srt = mus[order]
        left = np.diff(np.r_[lo, srt])
        right = np.diff(np.r_[srt, hi])
        sig_sorted = np.maximum(left, right)
        sigma = np.empty_like(sig_sorted)
        sigma[order] = sig_sorted
        span = hi - lo
        sigma = np.clip(sigma, span / min(100.0, 1.0 + mus.size), span)
        sigma[-1] = span  # prior
        self.mu, self.sigma, self.lo, self.hi = mus, sigma, lo, hi
        self.a = (lo - mus) / sigma
        self.b = (hi - mus) / sigma
        self.mass = np.maximum(norm.cdf(self.b) - norm.cdf(self.a), 1e-300)

    def sample(self, rng, n: int) -> np.ndarray:
        comp = rng.integers(0, self.mu.size, n)
        u = rng.uniform(size=n)
        lo_cdf = norm.cdf(self.a[comp])
        x = norm.ppf(lo_cdf + u * self.mass[comp]) * self.sigma[comp] + self.mu[comp]
        return np.clip(x, self.lo, self.hi)

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        z = (x[:, None] - self.mu[None, :]) / self.sigma[None, :]
        dens = norm.pdf(z) / (self.sigma * self.mass)[None, :]
        return np.log(np.maximum(dens.mean(axis=1), 1e-300))


def suggest(state: StudyState, space: SearchSpace) -> dict:
    """Next candidate: quasi-random during start-up, density-ratio maximiser afterwards."""
    number = len(state.trials)
    done = state.completed()
    if number < state.n_startup or len(done) < 2:
        return _startup_point(space, state.seed, number)
    ranked = sorted(done, key=lambda t: (t["value"], t["number"]))
    n_good = max(1, int(math.ceil(state.gamma * len(ranked))))
    good, bad = ranked[:n_good], ranked[n_good:]
    rng = np.random.default_rng(derive_seed(state.seed, "tpe", space.name, number))
    score = np.zeros(state.n_candidates)
    cand_internal = {}
    for d in space.dims:
        lo, hi = d.internal_bounds
        l_dist = _Parzen([d.to_internal(t["params"][d.name]) for t in good], lo, hi)
        g_dist = _Parzen([d.to_internal(t["params"][d.name]) for t in bad], lo, hi)
        raw = l_dist.sample(rng, state.n_candidates)
        snapped = np.array([d.to_internal(d.to_external(v)) for v in raw])
        cand_internal[d.name] = snapped
        score += l_dist.logpdf(snapped) - g_dist.logpdf(snapped)
    best = int(np.argmax(score))
    return {d.name: d.to_external(cand_internal[d.name][best]) for d in space.dims}


def run_study(objective, space: SearchSpace, n_trials: int, seed: int = 0, gamma: float = 0.25, n_startup: int = 10, n_candidates: int = 24) -> tuple:
    """Minimise ``objective(params)`` over ``space`` for exactly ``n_trials`` evaluations.

    A trial whose objective raises or returns a non-finite value is recorded as
    failed and ignored by the density model.
    """
    state = StudyState(seed=seed, gamma=gamma, n_startup=n_startup, n_candidates=n_candidates)
    for number in range(n_trials):
        params = suggest(state, space)
        try:
            value = float(objective(params))
            status = "ok" if math.isfinite(value) else "failed"
            error = None if status == "ok" else "non-finite objective"
        except Exception as exc:  # objective failures are data, not crashes
            value, status, error = None, "failed", f"{type(exc).__name__}: {exc}"
            log.warning("trial %d failed: %s", number, error)
        state.trials.append({"number": number, "params": params, "value": value if status == "ok" else None, "status": status, "error": error})
    best = state.best()
    if best is None:
        raise RuntimeError(f"all {n_trials} trials failed")
    return dict(best["params"]), state
