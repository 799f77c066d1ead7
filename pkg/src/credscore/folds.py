"""Rolling-window temporal folds and a mechanical leakage checker."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .ingest import ObservationSet


class EmptySplitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PeriodIndex:
    periods: tuple
    rows: dict = field(compare=False)

    @classmethod
    def from_observations(cls, obs: ObservationSet) -> "PeriodIndex":
        rows: dict = {}
        for idx, period in zip(obs.frame.index, obs.frame["period"]):
            if period is None or (isinstance(period, float) and np.isnan(period)):
                continue
            rows.setdefault(int(period.year), []).append(idx)
        periods = tuple(sorted(rows))
        return cls(periods, {p: rows[p] for p in periods})

    @classmethod
    def from_periods(cls, periods) -> "PeriodIndex":
        ps = tuple(sorted(set(periods)))
        return cls(ps, {p: [] for p in ps})


@dataclass(frozen=True)
class Fold:
    origin: object
    train_periods: tuple
    val_period: object
    test_period: object

    def to_dict(self):
        d = asdict(self)
        d["train_periods"] = list(self.train_periods)
        return d


@dataclass(frozen=True)
class TemporalFoldPlan:
    folds: tuple
    final_holdout: object

    def to_dict(self) -> dict:
        return {"folds": [f.to_dict() for f in self.folds], "final_holdout": self.final_holdout}


@dataclass
class LeakageReport:
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.passed


def plan_folds(periods: PeriodIndex, k: int = 5) -> TemporalFoldPlan:
    """Fold at origin t trains on every period up to t, validates on t+1, tests on t+2.

    When more than ``k`` origins are feasible the ``k`` most recent are kept.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    ps = list(periods.periods)
    if len(ps) < k + 2:
        raise ValueError(f"need at least k + 2 = {k + 2} distinct periods, found {len(ps)}")
    origins = range(len(ps) - 2 - k, len(ps) - 2)
    folds = tuple(Fold(ps[i], tuple(ps[: i + 1]), ps[i + 1], ps[i + 2]) for i in origins)
    return TemporalFoldPlan(folds, ps[-1])


def check_leakage(plan: TemporalFoldPlan, periods: PeriodIndex | None = None) -> LeakageReport:
    """Every violation of time ordering in ``plan``.

    Train and validation periods form the tuning window of a fold; neither may reach
    the final holdout. A fold's own test block may coincide with the holdout.
    """
    out = []
    known = set(periods.periods) if periods is not None else None
    prev = None
    for i, f in enumerate(plan.folds, start=1):
        name = f"fold {i} (origin {f.origin})"
        if not f.train_periods:
            out.append(f"{name}: empty training window")
        elif max(f.train_periods) >= f.val_period:
            out.append(f"{name}: train period {max(f.train_periods)} is not before validation period {f.val_period}")
        if f.val_period >= f.test_period:
            out.append(f"{name}: validation period {f.val_period} is not before test period {f.test_period}")
        tuning = set(f.train_periods) | {f.val_period}
        if plan.final_holdout in tuning or any(p > plan.final_holdout for p in tuning):
            out.append(f"{name}: tuning window touches the final holdout {plan.final_holdout}")
        if f.test_period > plan.final_holdout:
            out.append(f"{name}: test period {f.test_period} lies after the final holdout")
        if known is not None:
            absent = sorted((set(f.train_periods) | {f.val_period, f.test_period}) - known)
            if absent:
                out.append(f"{name}: periods {absent} not present in the data")
        if prev is not None and f.origin <= prev:
            out.append(f"{name}: folds are not ordered by origin")
        prev = f.origin
    return LeakageReport(out)


def materialize_fold(fold: Fold, obs: ObservationSet) -> tuple:
    """Row labels of the train, validation and test splits of ``fold``."""
    years = np.array([p.year for p in obs.frame["period"]])
    idx = obs.frame.index
    train = idx[np.isin(years, list(fold.train_periods))]
    val = idx[years == fold.val_period]
    test = idx[years == fold.test_period]
    for name, part in (("train", train), ("validation", val), ("test", test)):
        if len(part) == 0:
            warnings.warn(f"fold at origin {fold.origin}: empty {name} split", EmptySplitWarning)
    return list(train), list(val), list(test)
