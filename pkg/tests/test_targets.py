import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from credscore.targets import (
    DEFAULT_SCALE,
    SP_GRADES,
    RatingScale,
    build_targets,
    rank_rescale,
    to_binary,
    to_continuous,
)


def test_scale_shape():
    assert len(SP_GRADES) == 22 and len(set(SP_GRADES)) == 22
    assert DEFAULT_SCALE.rank("AAA") == 0 and DEFAULT_SCALE.rank("D") == 21
    assert "AA" in SP_GRADES


@pytest.mark.parametrize("grade,label", [("AAA", 1), ("D", 0), ("BBB-", 1), ("BB+", 0), ("bbb", 1)])
def test_binary(grade, label):
    assert to_binary(grade) == label


def test_continuous_examples():
    assert to_continuous("AAA") == 1.0
    assert to_continuous("D") == 0.0
    assert to_continuous("BBB") == pytest.approx(13 / 21)


def test_unknown_grade_named():
    with pytest.raises(ValueError, match="ZZZ"):
        to_binary("ZZZ")
    with pytest.raises(ValueError, match="ZZZ"):
        to_continuous("ZZZ")


def test_threshold_consistency_and_monotonicity():
    cut = to_continuous("BBB-")
    for i, g in enumerate(SP_GRADES):
        assert to_binary(g) == int(to_continuous(g) >= cut)
        if i:
            assert to_continuous(SP_GRADES[i - 1]) > to_continuous(g)


def test_rank_rescale_examples():
    np.testing.assert_array_equal(rank_rescale([0.2, 0.9]), [0.5, 1.0])
    out = rank_rescale([0.3] * 4)
    assert np.all(out == out[0])


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
def test_rank_rescale_monotone(xs):
    out = rank_rescale(xs)
    for i in range(len(xs)):
        for j in range(len(xs)):
            if xs[i] < xs[j]:
                assert out[i] < out[j]
            elif xs[i] == xs[j]:
                assert out[i] == out[j]


def test_build_targets_modes():
    ratings = ["AAA", "BB", "D"]
    np.testing.assert_array_equal(build_targets(ratings, "binary"), [1, 0, 0])
    np.testing.assert_allclose(build_targets(ratings, "continuous"), [1.0, 10 / 21, 0.0])
    with pytest.raises(ValueError):
        build_targets(ratings, "multiclass")


def test_scale_override():
    s = RatingScale(("Aaa", "Aa", "Baa", "Ba", "C"), investment_floor="Baa")
    assert to_binary("Baa", s) == 1 and to_binary("Ba", s) == 0
    assert to_continuous("Aaa", s) == 1.0 and to_continuous("C", s) == 0.0
    with pytest.raises(ValueError):
        RatingScale(("A", "A"), investment_floor="A")
