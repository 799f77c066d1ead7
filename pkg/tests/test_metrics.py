import numpy as np
import pytest

from credscore.metrics import (
    ConfusionCounts,
    auc,
    auc_trapezoid,
    bootstrap_ci,
    calibration_curve,
    classification_metrics,
    delong_test,
    kappa,
    psi,
    psi_flagged,
    psi_from_proportions,
    psi_report,
    psi_value,
    regression_metrics,
)
from credscore.tune import fit_isotonic
from oracles import pair_count_auc, shifted_normal_psi


def test_auc_dual_route_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 80))
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        s = rng.integers(0, int(rng.integers(2, 12)), n).astype(float)  # heavy ties
        a, t = auc(y, s), auc_trapezoid(y, s)
        assert abs(a - t) <= 1e-12
        assert abs(a - pair_count_auc(y, s)) <= 1e-12


def test_auc_examples():
    assert auc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == 0.75
    assert auc([0, 1, 0, 1], [0.3] * 4) == 0.5
    assert auc([0, 0, 1], [0.1, 0.2, 0.9]) == 1.0
    with pytest.raises(ValueError):
        auc([1, 1], [0.1, 0.2])


def test_kappa_worked_example():
    c = ConfusionCounts(tp=40, fp=20, tn=30, fn=10)
    assert kappa(c) == 0.40
    assert kappa(ConfusionCounts(25, 25, 25, 25)) == 0.0
    assert kappa(ConfusionCounts(10, 0, 5, 0)) == 1.0
    y = [1] * 50 + [0] * 50
    p = [1] * 40 + [0] * 10 + [1] * 20 + [0] * 30
    rep = classification_metrics(y, p)
    assert rep.accuracy == 0.70 and rep.kappa == 0.40
    with pytest.raises(ValueError):
        kappa(ConfusionCounts(0, 0, 0, 0))


def test_kappa_bounds_fuzzed():
    rng = np.random.default_rng(1)
    for _ in range(2000):
        c = ConfusionCounts(*[int(v) for v in rng.integers(0, 30, 4)])
        if c.total == 0:
            continue
        with np.errstate(all="ignore"):
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                k = kappa(c)
        assert -1 - 1e-12 <= k <= 1 + 1e-12


def test_classification_examples():
    rep = classification_metrics([0, 1, 1, 0], [0.0, 1.0, 1.0, 0.0])
    assert (rep.accuracy, rep.auc, rep.brier, rep.kappa) == (1.0, 1.0, 0.0, 1.0)
    assert classification_metrics([0, 1, 1, 0], [0.5] * 4).brier == 0.25
    with pytest.raises(ValueError):
        classification_metrics([0, 1], [0.5])


def test_regression_examples():
    r = regression_metrics([0, 1, 2], [0, 1, 4])
    assert np.isclose(r.rmse, np.sqrt(4 / 3)) and np.isclose(r.mae, 2 / 3) and np.isclose(r.r2, -1.0)
    r = regression_metrics([1, 2, 3], [1, 2, 3])
    assert (r.rmse, r.mae, r.r2) == (0.0, 0.0, 1.0)
    assert regression_metrics([1, 2, 3], [2, 2, 2]).r2 == 0.0
    assert regression_metrics([2, 2, 2], [1, 2, 3]).r2 is None


def test_delong_identical_and_symmetric():
    rng = np.random.default_rng(2)
    y = rng.integers(0, 2, 100)
    a, b = rng.normal(size=100) + y, rng.normal(size=100)
    same = delong_test(y, a, a)
    assert same.z == 0.0 and same.p_value == 1.0
    ab, ba = delong_test(y, a, b), delong_test(y, b, a)
    assert np.isclose(ab.z, -ba.z) and np.isclose(ab.p_value, ba.p_value)
    assert 0 <= ab.p_value <= 1


def test_delong_null_rejection_rate():
    rng = np.random.default_rng(2024)
    rejections = 0
    for _ in range(500):
        y = rng.integers(0, 2, 200)
        while y.min() == y.max():
            y = rng.integers(0, 2, 200)
        r = delong_test(y, rng.normal(size=200), rng.normal(size=200))
        rejections += r.p_value < 0.05
    assert 0.03 <= rejections / 500 <= 0.08


def test_bootstrap_examples():
    data = (np.arange(50.0),)
    ci = bootstrap_ci(lambda x: 3.0, data, n_resamples=200, seed=1)
    assert (ci.lower, ci.point, ci.upper) == (3.0, 3.0, 3.0)
    a = bootstrap_ci(np.mean, data, n_resamples=300, seed=9)
    assert a == bootstrap_ci(np.mean, data, n_resamples=300, seed=9)
    rng = np.random.default_rng(4)
    y = rng.integers(0, 2, 500)
    s = y + rng.normal(size=500)
    ci = bootstrap_ci(auc, (y, s), n_resamples=300, seed=0)
    assert ci.lower <= auc(y, s) <= ci.upper


def test_bootstrap_too_few_valid_resamples():
    y = np.array([1] + [0] * 99)
    with pytest.raises(ValueError):
        bootstrap_ci(auc, (y, np.arange(100.0)), n_resamples=150, seed=0, max_retries=0)


def test_psi_identical_is_zero():
    x = np.random.default_rng(0).normal(size=1000)
    rep = psi(x, x)
    assert rep.psi["f0"] == 0.0 and rep.flagged == []


def test_psi_one_sigma_shift():
    closed = shifted_normal_psi()
    assert 0.9 < closed < 0.95
    rng = np.random.default_rng(7)
    value, _ = psi_value(rng.normal(size=10_000), rng.normal(1.0, 1.0, 10_000))
    assert abs(value - closed) < 0.05
    assert psi_flagged(value)


def test_psi_boundary_not_flagged():
    from scipy.optimize import brentq

    p = brentq(lambda q: psi_from_proportions([0.5, 0.5], [q, 1 - q]) - 0.25, 0.5, 0.99)
    v = psi_from_proportions([0.5, 0.5], [p, 1 - p])
    assert abs(v - 0.25) < 1e-12
    assert not psi_flagged(0.25)
    assert psi_flagged(np.nextafter(0.25, 1))
    assert psi_report({"x": 0.25, "y": 0.3}).flagged == ["y"]


def test_psi_non_negative_both_ways():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = rng.normal(size=300), rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2), 200)
        assert psi_value(a, b)[0] >= 0 and psi_value(b, a)[0] >= 0


def test_calibrated_brier_not_worse():
    rng = np.random.default_rng(5)
    y = rng.integers(0, 2, 400)
    raw = np.clip(0.5 + 0.3 * (y - 0.5) + 0.3 * rng.normal(size=400), 0.01, 0.99) ** 2
    cal = fit_isotonic(raw, y).apply(raw)
    assert np.mean((cal - y) ** 2) <= np.mean((raw - y) ** 2)


def test_calibration_curve_shape():
    rng = np.random.default_rng(6)
    y = rng.integers(0, 2, 200)
    p = rng.uniform(size=200)
    cc = calibration_curve(y, p)
    assert isinstance(cc, dict)
