import numpy as np
import pytest

from bcpnbi.metrics import (
    EmptyInput,
    expected_calibration_error,
    metric_brier,
    metric_emr,
    metric_smd,
    metric_tmr,
    reliability_slope,
    reliability_statistic,
)


def test_brier_hand_value():
    assert metric_brier([0.1, 0.5], [0, 1]) == pytest.approx(0.13)


def test_exact_estimates():
    alpha = [0.0, 1.0, 1.0, 0.0]
    assert metric_brier(alpha, alpha) == 0
    assert metric_smd(alpha, alpha) == 0


def test_all_missed():
    alpha = miss = np.ones(7)
    assert metric_emr(alpha, miss) == metric_tmr(alpha, miss) == 1
    assert metric_smd(alpha, miss) == 0


def test_smd_is_emr_minus_tmr(rng):
    alpha = rng.uniform(size=100)
    miss = rng.integers(0, 2, size=100)
    assert metric_smd(alpha, miss) == pytest.approx(metric_emr(alpha, miss) - metric_tmr(alpha, miss), abs=1e-12)


@pytest.mark.parametrize("fn", [metric_emr, metric_tmr, metric_smd, metric_brier, reliability_statistic])
def test_empty_input(fn):
    with pytest.raises(EmptyInput):
        fn([], [])


def test_reliability_examples():
    assert reliability_statistic([0.2, 0.4], [0, 0]) == (0.0, 0.0)
    assert reliability_statistic([0.5], [1]) == (2.0, 0.0)
    mean, se = reliability_statistic([0.5, 0.25], [1, 0])
    assert mean == pytest.approx(1.0)
    assert se == pytest.approx(np.std([2.0, 0.0], ddof=1) / np.sqrt(2))
    with pytest.raises(ValueError):
        reliability_statistic([0.0], [1])


def test_calibration_diagnostics_perfect():
    # rows whose frequencies are exactly their probabilities
    probs = np.tile([0.7, 0.1, 0.1, 0.1], (10, 1))
    labels = np.array([0] * 7 + [1, 2, 3])
    assert expected_calibration_error(probs, labels, n_bins=1) == pytest.approx(0.0, abs=1e-12)
    assert expected_calibration_error(probs, np.full(10, 1), n_bins=1) == pytest.approx(0.7)


def test_reliability_slope_detects_overconfidence(rng):
    # labels drawn from p**0.5 renormalized: the reported p is too sharp
    n = 20_000
    probs = rng.dirichlet(np.ones(4), size=n)
    true = np.sqrt(probs)
    true /= true.sum(axis=1, keepdims=True)
    labels = np.array([rng.choice(4, p=t) for t in true])
    assert reliability_slope(probs, labels) < 0.9
    matched = np.array([rng.choice(4, p=p) for p in probs])
    assert reliability_slope(probs, matched) == pytest.approx(1.0, abs=0.05)
