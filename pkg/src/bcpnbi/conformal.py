"""Nonconformity scores, e-values and per-input miscoverage estimates.

Two estimators are provided for a fixed generalized top-K set:

* ``bcp_alpha``: the reciprocal of the e-value of the first excluded label,
  computed against a calibration set. Satisfies ``E[m / alpha] <= 1``.
* ``nme_alpha``: the detector's own probability mass outside the set, which
  carries no guarantee when the detector is miscalibrated.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .budgetset import BatchSets, PredictionSetResult
from .core import FLOOR_SLACK, BCPError, Example, Label, PredictiveDistribution


class DomainError(BCPError, ValueError):
    pass


class Method(str, enum.Enum):
    BCP = "BCP"
    NME = "NME"


@dataclass(frozen=True)
class ScoreParams:
    beta: float = 1.0

    def __post_init__(self):
        if not float(self.beta) > 0:
            raise ValueError(f"beta must be positive, got {self.beta!r}")
        object.__setattr__(self, "beta", float(self.beta))


@dataclass(frozen=True)
class MiscoverageEstimate:
    value: float
    method: Method
    e_value: Optional[float] = None

    def __float__(self) -> float:
        return self.value


def nc_score(p: float, params: ScoreParams = ScoreParams()) -> float:
    """Nonconformity ``p ** -beta``; less likely labels score higher."""
    if not p >= FLOOR_SLACK or p > 1.0 + 1e-12:
        raise DomainError(f"probability {p!r} outside [EPS_FLOOR, 1]; clamp before scoring")
    return float(p) ** (-params.beta)


def nc_scores(p: np.ndarray, beta: float = 1.0) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p < FLOOR_SLACK) or np.any(p > 1.0 + 1e-12):
        raise DomainError("probabilities must lie in [EPS_FLOOR, 1]; clamp before scoring")
    return np.power(p, -beta)


@dataclass(frozen=True)
class CalibrationSet:
    """Calibration examples with their nonconformity scores cached.

    Only the score sum enters the e-value, so per-test work is O(1) once the
    set is built. ``extend`` returns a new set rather than mutating.
    """

    examples: tuple
    cached_scores: np.ndarray = field(repr=False)
    score_sum: float
    params: ScoreParams = ScoreParams()

    def __post_init__(self):
        scores = np.array(self.cached_scores, dtype=float)
        if scores.ndim != 1 or scores.size < 1:
            raise ValueError("a calibration set needs at least one score")
        if self.examples and len(self.examples) != scores.size:
            raise ValueError(f"{len(self.examples)} examples but {scores.size} scores")
        if not np.all(np.isfinite(scores)) or np.any(scores <= 0):
            raise ValueError("calibration scores must be finite and positive")
        if not np.isclose(self.score_sum, scores.sum(), rtol=1e-9, atol=0.0):
            raise ValueError("score_sum does not match the cached scores")
        scores.setflags(write=False)
        object.__setattr__(self, "cached_scores", scores)
        object.__setattr__(self, "examples", tuple(self.examples))

    @property
    def n_cal(self) -> int:
        return self.cached_scores.size

    def __len__(self) -> int:
        return self.n_cal

    @classmethod
    def from_examples(cls, examples: Iterable[Example], params: ScoreParams = ScoreParams()) -> "CalibrationSet":
        examples = tuple(examples)
        scores = np.array([nc_score(ex.dist[ex.true_label.index], params) for ex in examples])
        return cls(examples, scores, float(scores.sum()), params)

    @classmethod
    def from_scores(cls, scores: Sequence[float], params: ScoreParams = ScoreParams()) -> "CalibrationSet":
        scores = np.asarray(scores, dtype=float)
        return cls((), scores, float(scores.sum()), params)

    @classmethod
    def from_arrays(cls, probs: np.ndarray, labels: np.ndarray, params: ScoreParams = ScoreParams()) -> "CalibrationSet":
        """Scores only, without materializing ``Example`` objects."""
        probs = np.asarray(probs, dtype=float)
        labels = np.asarray(labels, dtype=int)
        scores = nc_scores(probs[np.arange(labels.size), labels], params.beta)
        return cls((), scores, float(scores.sum()), params)

    def extend(self, examples: Iterable[Example]) -> "CalibrationSet":
        if not self.examples and self.n_cal:
            raise ValueError("cannot append examples to a score-only calibration set")
        new = CalibrationSet.from_examples(examples, self.params)
        return CalibrationSet(
            self.examples + new.examples,
            np.concatenate([self.cached_scores, new.cached_scores]),
            self.score_sum + new.score_sum,
            self.params,
        )


def e_value(test_score: float, cal: CalibrationSet) -> float:
    """Test score divided by the mean of the calibration scores plus the test score."""
    if not (np.isfinite(test_score) and test_score > 0):
        raise DomainError(f"test score must be finite and positive, got {test_score!r}")
    return test_score * (cal.n_cal + 1) / (cal.score_sum + test_score)


def e_values(test_scores: np.ndarray, score_sum: float, n_cal: int) -> np.ndarray:
    test_scores = np.asarray(test_scores, dtype=float)
    return test_scores * (n_cal + 1) / (score_sum + test_scores)


def bcp_alpha(
    test_dist: PredictiveDistribution,
    set_result: PredictionSetResult,
    cal: CalibrationSet,
    params: Optional[ScoreParams] = None,
    clip: bool = True,
) -> MiscoverageEstimate:
    """BCP miscoverage estimate for the set built from ``test_dist``.

    A full set has no excluded label; it gets ``1 / (N_cal + 1)``, the limit
    of the estimate as the excluded probability goes to zero. With ``clip``
    the value is capped at 1; the cap lowers the estimate, so it is the
    less conservative choice.
    """
    params = params or cal.params
    if params.beta != cal.params.beta:
        raise ValueError(f"calibration scored with beta={cal.params.beta}, test with beta={params.beta}")
    if set_result.is_full:
        e = float(cal.n_cal + 1)
    else:
        e = e_value(nc_score(set_result.lambda_star, params), cal)
    value = 1.0 / e
    if clip:
        value = min(value, 1.0)
    return MiscoverageEstimate(value, Method.BCP, e)


def nme_alpha(test_dist: PredictiveDistribution, set_result: PredictionSetResult) -> MiscoverageEstimate:
    """Probability mass the detector places outside the set."""
    excluded = set_result.ordered_labels[set_result.c_max:]
    # summing the excluded tail avoids 1 - (sum close to 1) cancellation
    value = float(np.sum([test_dist[lab.index] for lab in excluded])) if excluded else 0.0
    return MiscoverageEstimate(min(max(value, 0.0), 1.0), Method.NME)


def miscovered(set_result: PredictionSetResult, true_label: Label | int) -> int:
    return 0 if true_label in set_result else 1


def bcp_alpha_batch(probs: np.ndarray, sets: BatchSets, cal: CalibrationSet, clip: bool = True) -> np.ndarray:
    """Array version of :func:`bcp_alpha`; returns one estimate per row."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    full = sets.full
    p_excl = np.where(full, 1.0, sets.threshold)
    e = e_values(nc_scores(p_excl, cal.params.beta), cal.score_sum, cal.n_cal)
    e = np.where(full, cal.n_cal + 1.0, e)
    alpha = 1.0 / e
    return np.minimum(alpha, 1.0) if clip else alpha


def nme_alpha_batch(probs: np.ndarray, sets: BatchSets) -> np.ndarray:
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    outside = np.where(sets.mask, 0.0, probs).sum(axis=1)
    return np.clip(outside, 0.0, 1.0)


def miscovered_batch(sets: BatchSets, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    return (~sets.mask[np.arange(labels.size), labels]).astype(np.int8)
