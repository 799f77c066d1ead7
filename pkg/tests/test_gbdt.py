import json

import numpy as np
import pandas as pd
import pytest

from credscore import gbdt
from credscore.gbdt import (
    GBDTClassifier,
    GBDTRegressor,
    DegenerateTargetWarning,
    Tree,
    loss_grad_hess,
    loss_value,
    model_from_dict,
    model_from_json,
)
from oracles import walk, assert_tree_contract

XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Y = np.array([0, 1, 1, 0])


def _stump(feature, threshold, left, right):
    return Tree(
        feature=np.array([feature, -1, -1]),
        threshold=np.array([threshold, 0.0, 0.0]),
        left=np.array([1, -1, -1]),
        right=np.array([2, -1, -1]),
        value=np.array([0.0, left, right]),
        cover=np.array([2.0, 1.0, 1.0]),
        depth=np.array([0, 1, 1]),
    )


def _model(trees, base=0.0, lr=0.5, n_features=2, kind="GBDTRegressor"):
    doc = {
        "format": "credscore.gbdt",
        "version": 1,
        "kind": kind,
        "loss": "squared_error",
        "params": {"learning_rate": lr},
        "base_score": base,
        "best_iteration": len(trees),
        "feature_names": [f"f{j}" for j in range(n_features)],
        "trees": [t.to_dict() for t in trees],
    }
    return model_from_dict(doc)


# ---------------------------------------------------------------- examples


def test_zero_trees_kept_predicts_mean():
    X = np.arange(4.0)[:, None]
    m = GBDTRegressor(iterations=5).fit(X, [1, 2, 3, 4])
    doc = m.to_dict()
    doc["best_iteration"] = 0
    empty = model_from_dict(doc)
    assert np.array_equal(empty.predict_raw(X), np.full(4, 2.5))
    assert np.array_equal(_model([], base=-1.25).predict_raw(np.zeros((3, 2))), np.full(3, -1.25))


@pytest.mark.parametrize("growth", ["depthwise", "leafwise", "symmetric"])
def test_xor_fits_exactly(growth):
    m = GBDTClassifier(growth=growth, max_depth=2, iterations=10, learning_rate=0.5, min_child_weight=0.0)
    m.fit(XOR_X, XOR_Y)
    assert np.array_equal(m.predict(XOR_X), XOR_Y)
    p = gbdt.predict_proba(m, XOR_X)
    assert np.all((p > 0.5) == (XOR_Y == 1))


def test_early_stopping_best_seven_stop_ten():
    # each depth-2 tree fits the residual exactly, so train preds are ybar + (1 - 0.9^t)(y - ybar);
    # val labels sit exactly on the iteration-7 curve
    X = np.arange(4.0)[:, None]
    y = np.array([0.0, 1.0, 2.0, 3.0])
    c = 1 - 0.9**7
    yv = y.mean() + c * (y - y.mean())
    m, log = gbdt.fit(
        X, y, loss="squared_error", val=(X, yv),
        growth="depthwise", max_depth=2, l2=0.0, learning_rate=0.1, iterations=50, early_stopping_rounds=3,
    )
    assert m.best_iteration_ == 7
    assert len(log.train_loss) == len(log.val_loss) == 10
    assert log.stopping_reason == "early stopping"
    assert int(np.argmin(log.val_loss)) + 1 == 7
    assert len(m.active_trees) == 7


def test_stump_traversal():
    m = _model([_stump(0, 0.0, -1.0, 1.0)], lr=0.5)
    assert m.predict_raw(np.array([[-3.0, 9.0]]))[0] == -0.5
    assert m.predict_raw(np.array([[0.0, 0.0]]))[0] == -0.5  # x <= t goes left
    assert m.predict_raw(np.array([[0.1, 0.0]]))[0] == 0.5


def test_two_stumps_additive():
    m = _model([_stump(0, 0.0, -1.0, 1.0), _stump(1, 2.0, 4.0, -2.0)], base=1.0, lr=0.5)
    rows = np.array([[-1.0, 1.0], [1.0, 1.0], [1.0, 5.0]])
    # by hand: 1 + 0.5*(-1 + 4), 1 + 0.5*(1 + 4), 1 + 0.5*(1 - 2)
    assert np.array_equal(m.predict_raw(rows), [2.5, 3.5, 0.5])


def test_predict_proba_saturation():
    assert gbdt.sigmoid(0.0) == 0.5
    assert gbdt.sigmoid(30.0) > 0.9999
    m = _model([], base=30.0, kind="GBDTClassifier")
    assert m.predict_proba(np.zeros((1, 2)))[0, 1] > 0.9999


def test_predict_proba_rejects_regressor():
    m = GBDTRegressor(iterations=2).fit(XOR_X, [0.0, 1.0, 2.0, 3.0])
    with pytest.raises(TypeError):
        gbdt.predict_proba(m, XOR_X)


def test_grad_hess_examples():
    g, h = loss_grad_hess("logloss", np.array([1.0]), np.array([0.0]))
    assert g[0] == -0.5 and h[0] == 0.25
    g, h = loss_grad_hess("squared_error", np.array([3.0]), np.array([3.0]))
    assert g[0] == 0.0 and h[0] == 1.0
    with pytest.raises(ValueError):
        loss_grad_hess("logloss", np.ones(2), np.ones(3))


def _row_loss(loss, y, z):
    return loss_value(loss, np.array([y]), np.array([z]))


@pytest.mark.parametrize("loss", ["logloss", "squared_error"])
def test_gradients_match_finite_differences(loss):
    rng = np.random.default_rng(5)
    z = rng.uniform(-4, 4, 20)
    y = rng.integers(0, 2, 20).astype(float) if loss == "logloss" else rng.normal(size=20)
    g, h = loss_grad_hess(loss, y, z)
    step = 1e-5
    num_g = np.array([(_row_loss(loss, yi, zi + step) - _row_loss(loss, yi, zi - step)) / (2 * step) for yi, zi in zip(y, z)])
    num_h = (loss_grad_hess(loss, y, z + step)[0] - loss_grad_hess(loss, y, z - step)[0]) / (2 * step)
    assert np.max(np.abs(g - num_g)) < 1e-6
    assert np.max(np.abs(h - num_h)) < 1e-6


# ---------------------------------------------------------------- properties


def _data(seed, n=120, m=5, binary=True):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, m))
    s = X[:, 0] - 0.5 * X[:, 1] * X[:, 2] + 0.3 * rng.normal(size=n)
    y = (s > 0).astype(int) if binary else s
    return X, y


def test_hash_deterministic_across_runs_and_threads():
    X, y = _data(1, n=300, m=6)
    kw = dict(growth="leafwise", iterations=15, subsample=0.8, feature_fraction=0.7, seed=42)
    hashes = {GBDTClassifier(n_jobs=j, **kw).fit(X, y).model_hash() for j in (1, 1, 2, 2)}
    assert len(hashes) == 1
    assert GBDTClassifier(**{**kw, "seed": 43}).fit(X, y).model_hash() not in hashes


def test_growth_contracts_fuzzed():
    rng = np.random.default_rng(2024)
    for case in range(100):
        mode = ("symmetric", "leafwise", "depthwise")[case % 3]
        n, m = int(rng.integers(10, 80)), int(rng.integers(1, 6))
        X = rng.normal(size=(n, m))
        if rng.random() < 0.3:
            X = np.round(X)
        binary = rng.random() < 0.5
        y = (X[:, 0] + rng.normal(size=n) > 0).astype(int) if binary else rng.normal(size=n)
        if binary and y.min() == y.max():
            y[0] = 1 - y[0]
        max_depth = None if rng.random() < 0.2 else int(rng.integers(1, 7))
        num_leaves = int(rng.integers(2, 20))
        cls = GBDTClassifier if binary else GBDTRegressor
        model = cls(
            growth=mode, max_depth=max_depth, num_leaves=num_leaves, iterations=3,
            min_child_weight=float(rng.choice([0.0, 1.0, 3.0])), l1=float(rng.choice([0.0, 0.5])),
            l2=float(rng.choice([0.0, 1.0])), histogram_bins=int(rng.integers(2, 40)),
            subsample=float(rng.choice([1.0, 0.7])), seed=case,
        ).fit(X, y)
        for tree in model.trees_:
            assert_tree_contract(tree, mode, max_depth, num_leaves)


@pytest.mark.parametrize("growth", ["symmetric", "leafwise", "depthwise"])
@pytest.mark.parametrize("binary", [True, False])
def test_training_loss_non_increasing(growth, binary):
    X, y = _data(3, binary=binary)
    cls = GBDTClassifier if binary else GBDTRegressor
    m = cls(growth=growth, iterations=30, learning_rate=0.1, max_depth=3).fit(X, y)
    losses = np.array(m.train_log_.train_loss)
    assert np.all(np.diff(losses) <= 1e-12)


def test_prediction_additivity_against_walk():
    X, y = _data(4, binary=False)
    m = GBDTRegressor(growth="leafwise", iterations=12, learning_rate=0.3).fit(X, y)
    manual = np.array([m.base_score_ + sum(m.learning_rate * walk(t, x) for t in m.trees_) for x in X])
    assert np.allclose(m.predict_raw(X), manual, rtol=0, atol=1e-12)


def test_json_roundtrip_identical():
    X, y = _data(5)
    m = GBDTClassifier(growth="symmetric", iterations=20, max_depth=4).fit(X, y)
    back = model_from_json(m.to_json())
    assert np.array_equal(back.predict_raw(X), m.predict_raw(X))
    assert back.model_hash() == m.model_hash()
    assert json.loads(m.to_json())["format"] == "credscore.gbdt"


def test_base_scores():
    X = np.arange(6.0)[:, None]
    assert GBDTRegressor(iterations=1).fit(X, [1, 2, 3, 4, 5, 6]).base_score_ == 3.5
    c = GBDTClassifier(iterations=1).fit(X, [0, 0, 0, 1, 1, 0])
    assert np.isclose(c.base_score_, np.log(2 / 4))


def test_degenerate_target_warns():
    X = np.arange(6.0)[:, None]
    with pytest.warns(DegenerateTargetWarning):
        m = GBDTClassifier(iterations=5).fit(X, np.zeros(6))
    assert m.trees_ == [] and np.all(m.predict_proba(X)[:, 1] < 1e-12)


def test_input_errors():
    X = np.arange(6.0).reshape(3, 2)
    with pytest.raises(ValueError):
        GBDTRegressor().fit(np.array([[0.0, np.nan], [1.0, 2.0]]), [0, 1])
    with pytest.raises(ValueError):
        GBDTRegressor().fit(X[:1], [0.0])
    with pytest.raises(ValueError):
        GBDTRegressor(early_stopping_rounds=3).fit(X, [0, 1, 2])
    for bad in (dict(learning_rate=0), dict(subsample=0), dict(iterations=0), dict(growth="random")):
        with pytest.raises(ValueError):
            GBDTRegressor(**bad).fit(X, [0, 1, 2])
    m = GBDTRegressor(iterations=2).fit(X, [0, 1, 2])
    with pytest.raises(ValueError):
        m.predict(np.zeros((2, 3)))


def test_column_names_checked():
    df = pd.DataFrame({"a": [0.0, 1.0, 2.0, 3.0], "b": [1.0, 0.0, 1.0, 0.0]})
    m = GBDTRegressor(iterations=2).fit(df, [0, 1, 2, 3])
    assert m.feature_names_ == ["a", "b"]
    with pytest.raises(ValueError):
        m.predict(df.rename(columns={"a": "z"}))


def test_sklearn_protocol():
    from sklearn.base import clone

    m = GBDTClassifier(growth="leafwise", num_leaves=7)
    c = clone(m)
    assert c.get_params()["num_leaves"] == 7
    X, y = _data(6)
    assert c.fit(X, y).score(X, y) > 0.8
