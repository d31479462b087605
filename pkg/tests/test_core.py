from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcpnbi.core import (
    EPS_FLOOR,
    AllZeroError,
    CostModel,
    Example,
    LabelKind,
    LabelSpace,
    LengthMismatchError,
    PredictiveDistribution,
    normalize,
    point_estimate,
)

raw_vectors = st.lists(st.floats(0, 1e6, allow_nan=False), min_size=3, max_size=10).filter(lambda v: max(v) > 0)


def test_label_space_layout():
    space = LabelSpace(4)
    assert space.size() == 6
    kinds = [lab.kind for lab in space.labels()]
    assert kinds[:2] == [LabelKind.NO_TRANSMISSION, LabelKind.WIFI_ONLY]
    assert kinds[2:] == [LabelKind.INTERFERENCE] * 4
    assert [lab.subcarrier for lab in space.labels()[2:]] == [1, 2, 3, 4]
    assert space.interference_label(3).index == 4
    with pytest.raises(IndexError):
        space.label(6)
    with pytest.raises(ValueError):
        LabelSpace(0)


def test_cost_model_rules():
    assert CostModel.uniform(4).costs == (0, 0, 1, 1, 1, 1)
    with pytest.raises(ValueError):
        CostModel((0.5, 0, 1, 1))
    with pytest.raises(ValueError):
        CostModel((0, 0, 0, 1))
    with pytest.raises(ValueError):
        CostModel((0, 0, 1.5))


def test_normalize_one_hot_is_floored():
    dist = normalize([0.0, 1.0, 0.0, 0.0, 0.0, 0.0], LabelSpace(4))
    assert np.all(dist.probs >= EPS_FLOOR * (1 - 1e-9))
    assert dist.probs[1] == pytest.approx(1.0, abs=1e-10)
    assert abs(dist.probs.sum() - 1.0) <= 1e-9


def test_normalize_uniform():
    np.testing.assert_allclose(normalize([2] * 6).probs, np.full(6, 1 / 6), rtol=1e-15)


def test_normalize_clamps_then_divides():
    # exact rational evaluation of scale, clamp, renormalize
    eps = Fraction(EPS_FLOOR)
    clamped = [Fraction(1, 4), Fraction(3, 4)] + [eps] * 4
    total = sum(clamped)
    expected = [float(c / total) for c in clamped]
    np.testing.assert_allclose(normalize([1, 3, 0, 0, 0, 0]).probs, expected, rtol=1e-15)


def test_normalize_errors():
    with pytest.raises(AllZeroError):
        normalize([0, 0, 0, 0])
    with pytest.raises(LengthMismatchError):
        normalize([1, 2, 3], LabelSpace(4))
    with pytest.raises(ValueError):
        normalize([1, -1, 3])


def test_distribution_is_immutable():
    dist = normalize([1, 2, 3])
    with pytest.raises(ValueError):
        dist.probs[0] = 0.5
    with pytest.raises(ValueError):
        PredictiveDistribution(np.array([0.5, 0.5, 0.0]))


@pytest.mark.parametrize(
    "probs, expected",
    [
        ([1 / 6] * 6, 0),
        ([0.1, 0.6, 0.1, 0.1, 0.05, 0.05], 1),
        ([0.3, 0.3, 0.2, 0.1, 0.05, 0.05], 0),
    ],
)
def test_point_estimate(probs, expected):
    assert point_estimate(normalize(probs)).index == expected


def test_example_label_bounds():
    ex = Example.from_arrays([0.2, 0.3, 0.5], 2)
    assert ex.true_label.kind is LabelKind.INTERFERENCE
    with pytest.raises(IndexError):
        Example.from_arrays([0.2, 0.3, 0.5], 3)


@settings(max_examples=200, deadline=None)
@given(raw_vectors, st.floats(1e-3, 1e3))
def test_point_estimate_scale_invariant(raw, c):
    assert point_estimate(normalize(raw)) == point_estimate(normalize([c * v for v in raw]))


@settings(max_examples=200, deadline=None)
@given(raw_vectors)
def test_normalize_idempotent(raw):
    assert normalize(raw).probs.min() >= EPS_FLOOR * (1 - 1e-9)
    once = normalize(raw)
    np.testing.assert_allclose(normalize(once.probs).probs, once.probs, rtol=0, atol=1e-12)
    assert abs(once.probs.sum() - 1) <= 1e-9
