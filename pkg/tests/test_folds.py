import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from credscore.folds import (
    EmptySplitWarning,
    Fold,
    PeriodIndex,
    TemporalFoldPlan,
    check_leakage,
    materialize_fold,
    plan_folds,
)
from credscore.preprocess import fit_preprocessor
from helpers import make_obs

YEARS = PeriodIndex.from_periods(range(2010, 2017))


def test_seven_years_five_folds():
    plan = plan_folds(YEARS, 5)
    assert [f.origin for f in plan.folds] == [2010, 2011, 2012, 2013, 2014]
    f3 = plan.folds[2]
    assert f3.train_periods == (2010, 2011, 2012) and f3.val_period == 2013 and f3.test_period == 2014
    assert plan.final_holdout == 2016


def test_minimal_and_too_few():
    plan = plan_folds(PeriodIndex.from_periods(["P1", "P2", "P3"]), 1)
    (f,) = plan.folds
    assert f.train_periods == ("P1",) and f.val_period == "P2" and f.test_period == "P3"
    with pytest.raises(ValueError, match="k \\+ 2 = 3"):
        plan_folds(PeriodIndex.from_periods(["P1", "P2"]), 1)
    with pytest.raises(ValueError):
        plan_folds(YEARS, 0)


def test_most_recent_origins_kept():
    plan = plan_folds(YEARS, 2)
    assert [f.origin for f in plan.folds] == [2013, 2014]


@given(st.sets(st.integers(1990, 2030), min_size=3, max_size=15), st.integers(1, 13))
def test_generated_plans_pass(years, k):
    pidx = PeriodIndex.from_periods(years)
    if len(years) < k + 2:
        with pytest.raises(ValueError):
            plan_folds(pidx, k)
        return
    plan = plan_folds(pidx, k)
    assert len(plan.folds) == k
    assert check_leakage(plan, pidx).passed
    for f in plan.folds:
        assert max(f.train_periods) < f.val_period < f.test_period
        assert plan.final_holdout > max(f.train_periods)
    assert json.dumps(plan.to_dict()) == json.dumps(plan_folds(pidx, k).to_dict())


def test_violation_val_equals_train_max():
    plan = TemporalFoldPlan((Fold(2012, (2010, 2011, 2012), 2012, 2013),), 2016)
    rep = check_leakage(plan, YEARS)
    assert not rep.passed
    assert any("fold 1" in v and "validation" in v for v in rep.violations)


def test_violation_val_not_before_test():
    plan = TemporalFoldPlan((Fold(2010, (2010,), 2012, 2011),), 2016)
    assert not check_leakage(plan, YEARS).passed


def test_violation_six_folds_on_seven_years():
    # continuing the t / t+1 / t+2 rule to a sixth origin tunes on the holdout year
    folds = tuple(Fold(t, tuple(range(2010, t + 1)), t + 1, t + 2) for t in range(2010, 2016))
    rep = check_leakage(TemporalFoldPlan(folds, 2016), YEARS)
    assert not rep.passed
    assert any("fold 6" in v and "holdout" in v for v in rep.violations)
    assert len(folds) == 6


def test_test_block_may_be_holdout():
    plan = plan_folds(YEARS, 5)
    assert plan.folds[-1].test_period == plan.final_holdout
    assert check_leakage(plan, YEARS).passed


def test_report_lists_every_violation():
    plan = TemporalFoldPlan((Fold(2014, (2010, 2014), 2013, 2013), Fold(2011, (2010,), 2011, 2012)), 2016)
    rep = check_leakage(plan, YEARS)
    assert len(rep.violations) == 3
    assert "not ordered" in rep.violations[-1]


def _three_period_obs(per=10):
    years = [y for y in (2010, 2011, 2012) for _ in range(per)]
    return make_obs({"x": np.arange(len(years), dtype=float)}, years=years)


def test_materialize_counts_and_disjointness():
    obs = _three_period_obs()
    pidx = PeriodIndex.from_observations(obs)
    (fold,) = plan_folds(pidx, 1).folds
    tr, va, te = materialize_fold(fold, obs)
    assert (len(tr), len(va), len(te)) == (10, 10, 10)
    assert not (set(tr) & set(va) or set(tr) & set(te) or set(va) & set(te))
    years = {i: p.year for i, p in zip(obs.frame.index, obs.frame["period"])}
    assert all(years[i] == 2011 for i in va)
    assert max(years[i] for i in tr) < min(years[i] for i in va + te)


def test_empty_split_warns():
    obs = _three_period_obs()
    with pytest.warns(EmptySplitWarning):
        materialize_fold(Fold(2010, (2010,), 2011, 2013), obs)


def test_period_index_groups_rows():
    obs = _three_period_obs(4)
    pidx = PeriodIndex.from_observations(obs)
    assert pidx.periods == (2010, 2011, 2012)
    assert sorted(i for rows in pidx.rows.values() for i in rows) == list(range(12))


def test_fold_statistics_are_fresh():
    rng = np.random.default_rng(0)
    years = np.repeat(np.arange(2010, 2016), 15)
    obs = make_obs({"x": rng.normal(size=years.size)}, years=years)
    plan = plan_folds(PeriodIndex.from_observations(obs), 4)
    hashes = []
    for fold in plan.folds:
        tr, _, _ = materialize_fold(fold, obs)
        fp, _ = fit_preprocessor(obs.subset(tr))
        hashes.append(fp.state_hash())
    assert len(set(hashes)) == len(hashes)
