"""Generalized top-K prediction sets under a mitigation budget.

The set keeps the longest prefix of the probability-sorted labels whose
cumulative mitigation cost fits in the budget ``K``. The threshold that
produces this set is the probability of the first excluded label.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import CostModel, Label, LengthMismatchError, PredictiveDistribution

# absorbs float round-off in prefix sums such as 0.1 + 0.2 against K = 0.3
BUDGET_ATOL = 1e-12


@dataclass(frozen=True)
class Budget:
    k: float

    def __post_init__(self):
        k = float(self.k)
        if not k >= 0.0:
            raise ValueError(f"budget must be nonnegative, got {self.k!r}")
        object.__setattr__(self, "k", k)


@dataclass(frozen=True)
class PredictionSetResult:
    ordered_labels: tuple
    c_max: int
    lambda_star: Optional[float]
    included: tuple

    @property
    def is_full(self) -> bool:
        return self.c_max == len(self.ordered_labels)

    @property
    def first_excluded(self) -> Optional[Label]:
        if self.is_full:
            return None
        return self.ordered_labels[self.c_max]

    def __contains__(self, label) -> bool:
        index = label.index if isinstance(label, Label) else int(label)
        return any(lab.index == index for lab in self.included)

    def __len__(self) -> int:
        return self.c_max


def order_labels(dist: PredictiveDistribution) -> list[Label]:
    """Labels by descending probability; equal probabilities keep ascending index order."""
    order = np.argsort(-dist.probs, kind="stable")
    space = dist.label_space
    return [space.label(i) for i in order]


def compute_cmax(ordering, costs: CostModel, budget: Budget | float) -> int:
    """Length of the longest ordering prefix whose summed cost is within budget."""
    k = budget.k if isinstance(budget, Budget) else Budget(budget).k
    if len(ordering) != len(costs):
        raise LengthMismatchError(f"ordering has {len(ordering)} labels, cost model {len(costs)}")
    total = 0.0
    for m, label in enumerate(ordering):
        total += costs[label.index]
        if total > k + BUDGET_ATOL:
            return m
    return len(ordering)


def lambda_star(ordering, c_max: int, dist: PredictiveDistribution) -> Optional[float]:
    """Probability of the first excluded label, or ``None`` for a full set."""
    if c_max >= len(ordering):
        return None
    return dist[ordering[c_max].index]


def build_set(dist: PredictiveDistribution, costs: CostModel, budget: Budget | float) -> PredictionSetResult:
    ordering = order_labels(dist)
    c_max = compute_cmax(ordering, costs, budget)
    return PredictionSetResult(
        ordered_labels=tuple(ordering),
        c_max=c_max,
        lambda_star=lambda_star(ordering, c_max, dist),
        included=tuple(ordering[:c_max]),
    )


@dataclass(frozen=True)
class BatchSets:
    """Vectorized prediction sets for ``n`` inputs over ``L`` labels.

    Attributes
    ----------
    order : ndarray of shape (n, L)
        Label indices sorted by descending probability.
    c_max : ndarray of shape (n,)
    threshold : ndarray of shape (n,)
        Probability of the first excluded label; NaN when the set is full.
    mask : ndarray of bool, shape (n, L)
        ``mask[i, y]`` is True when label ``y`` is in the i-th set.
    """

    order: np.ndarray
    c_max: np.ndarray
    threshold: np.ndarray
    mask: np.ndarray

    @property
    def full(self) -> np.ndarray:
        return self.c_max == self.order.shape[1]

    def first_excluded(self) -> np.ndarray:
        """Index of the first excluded label per row, -1 for full sets."""
        n, n_labels = self.order.shape
        pos = np.minimum(self.c_max, n_labels - 1)
        idx = self.order[np.arange(n), pos]
        return np.where(self.full, -1, idx)


def build_sets(probs: np.ndarray, costs, k: float) -> BatchSets:
    """Array version of :func:`build_set` for a matrix of softmax rows."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    costs = np.asarray(costs.costs if isinstance(costs, CostModel) else costs, dtype=float)
    n, n_labels = probs.shape
    if costs.shape != (n_labels,):
        raise LengthMismatchError(f"expected {n_labels} costs, got {costs.shape}")
    k = Budget(k).k

    order = np.argsort(-probs, axis=1, kind="stable")
    prefix = np.cumsum(costs[order], axis=1)
    # costs are nonnegative, so prefix sums are nondecreasing and the count is the prefix length
    c_max = np.count_nonzero(prefix <= k + BUDGET_ATOL, axis=1)

    rows = np.arange(n)
    full = c_max == n_labels
    threshold = probs[rows, order[rows, np.minimum(c_max, n_labels - 1)]]
    threshold = np.where(full, np.nan, threshold)

    ranks = np.empty_like(order)
    ranks[rows[:, None], order] = np.arange(n_labels)
    mask = ranks < c_max[:, None]
    return BatchSets(order=order, c_max=c_max, threshold=threshold, mask=mask)
