"""Per-test-set metrics for miscoverage estimates, plus calibration diagnostics."""

from __future__ import annotations

import numpy as np

from .core import BCPError


class EmptyInput(BCPError, ValueError):
    pass


def _pair(alpha, miss):
    alpha = np.asarray(alpha, dtype=float)
    miss = np.asarray(miss, dtype=float)
    if alpha.size == 0:
        raise EmptyInput("metrics need at least one test point")
    if alpha.shape != miss.shape:
        raise ValueError(f"shape mismatch: {alpha.shape} vs {miss.shape}")
    return alpha, miss


def metric_emr(alpha, miss) -> float:
    """Estimated miscoverage rate: mean of the estimates."""
    alpha, _ = _pair(alpha, miss)
    return float(np.mean(alpha))


def metric_tmr(alpha, miss) -> float:
    """True miscoverage rate: fraction of sets missing the label."""
    _, miss = _pair(alpha, miss)
    return float(np.mean(miss))


def metric_smd(alpha, miss) -> float:
    """Signed miscoverage difference; positive means conservative."""
    alpha, miss = _pair(alpha, miss)
    return float(np.mean(alpha - miss))


def metric_brier(alpha, miss) -> float:
    alpha, miss = _pair(alpha, miss)
    return float(np.mean((alpha - miss) ** 2))


def reliability_statistic(alpha, miss) -> tuple[float, float]:
    """Mean and standard error of ``miss / alpha`` over all pairs.

    A reliable estimator keeps the mean at or below 1.
    """
    alpha, miss = _pair(alpha, miss)
    if np.any(alpha <= 0):
        raise ValueError("miscoverage estimates must be positive")
    ratio = miss / alpha
    n = ratio.size
    se = float(np.std(ratio, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(np.mean(ratio)), se


def expected_calibration_error(probs, labels, n_bins: int = 10) -> float:
    """Top-1 ECE with equal-mass confidence bins."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = np.asarray(labels, dtype=int)
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(float)
    order = np.argsort(conf, kind="stable")
    ece = 0.0
    for chunk in np.array_split(order, n_bins):
        if chunk.size:
            ece += chunk.size * abs(conf[chunk].mean() - correct[chunk].mean())
    return ece / conf.size


def reliability_slope(probs, labels, n_bins: int = 10) -> float:
    """Slope of empirical frequency against predicted probability.

    Every (example, label) pair contributes; pairs are grouped into
    equal-width probability bins and a count-weighted least-squares line is
    fit through the bin means. A calibrated detector gives slope 1.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = np.asarray(labels, dtype=int)
    hits = np.zeros_like(probs)
    hits[np.arange(labels.size), labels] = 1.0
    p, h = probs.ravel(), hits.ravel()
    which = np.minimum((p * n_bins).astype(int), n_bins - 1)
    counts = np.bincount(which, minlength=n_bins)
    keep = counts > 0
    x = np.bincount(which, weights=p, minlength=n_bins)[keep] / counts[keep]
    y = np.bincount(which, weights=h, minlength=n_bins)[keep] / counts[keep]
    w = counts[keep].astype(float)
    xm, ym = np.average(x, weights=w), np.average(y, weights=w)
    return float(np.sum(w * (x - xm) * (y - ym)) / np.sum(w * (x - xm) ** 2))
