"""Label space, cost model and predictive-distribution types for NBI detection.

Labels are ordered ``[no_transmission, wifi_only, subcarrier_1, ..., subcarrier_S]``
so a label's index alone determines its kind.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Hashable, Optional, Sequence

import numpy as np

EPS_FLOOR = 1e-12
# dividing floored entries by a sum slightly above 1 leaves them a few ulps under the floor
FLOOR_SLACK = EPS_FLOOR * (1 - 1e-9)


class BCPError(Exception):
    """Base class for errors raised by this package."""


class AllZeroError(BCPError, ValueError):
    pass


class LengthMismatchError(BCPError, ValueError):
    pass


class LabelKind(enum.Enum):
    NO_TRANSMISSION = "no_transmission"
    WIFI_ONLY = "wifi_only"
    INTERFERENCE = "interference"


@dataclass(frozen=True)
class Label:
    index: int
    kind: LabelKind
    subcarrier: Optional[int] = None

    @property
    def needs_mitigation(self) -> bool:
        return self.kind is LabelKind.INTERFERENCE

    def __str__(self) -> str:
        if self.kind is LabelKind.INTERFERENCE:
            return f"subcarrier_{self.subcarrier}"
        return self.kind.value


@dataclass(frozen=True)
class LabelSpace:
    num_subcarriers: int

    NO_TRANSMISSION = 0
    WIFI_ONLY = 1

    def __post_init__(self):
        if int(self.num_subcarriers) != self.num_subcarriers or self.num_subcarriers < 1:
            raise ValueError(f"num_subcarriers must be a positive integer, got {self.num_subcarriers!r}")

    def size(self) -> int:
        return self.num_subcarriers + 2

    def __len__(self) -> int:
        return self.size()

    def label(self, index: int) -> Label:
        index = int(index)
        if not 0 <= index < self.size():
            raise IndexError(f"label index {index} outside [0, {self.size() - 1}]")
        if index == self.NO_TRANSMISSION:
            return Label(index, LabelKind.NO_TRANSMISSION)
        if index == self.WIFI_ONLY:
            return Label(index, LabelKind.WIFI_ONLY)
        return Label(index, LabelKind.INTERFERENCE, subcarrier=index - 1)

    def interference_label(self, subcarrier: int) -> Label:
        """Label for interference on the 1-based monitored ``subcarrier``."""
        if not 1 <= subcarrier <= self.num_subcarriers:
            raise IndexError(f"subcarrier {subcarrier} outside [1, {self.num_subcarriers}]")
        return self.label(subcarrier + 1)

    def labels(self) -> list[Label]:
        return [self.label(i) for i in range(self.size())]

    @classmethod
    def from_size(cls, n_labels: int) -> "LabelSpace":
        return cls(int(n_labels) - 2)


@dataclass(frozen=True)
class CostModel:
    """Per-label mitigation costs; interference-free labels cost nothing."""

    costs: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.costs)
        object.__setattr__(self, "costs", c)
        if len(c) < 3:
            raise ValueError("a cost model needs at least S + 2 = 3 entries")
        if c[0] != 0.0 or c[1] != 0.0:
            raise ValueError("no_transmission and wifi_only must have zero cost")
        for i, v in enumerate(c[2:], start=2):
            if not 0.0 < v <= 1.0:
                raise ValueError(f"interference cost at index {i} must lie in (0, 1], got {v}")

    @classmethod
    def uniform(cls, num_subcarriers: int, cost: float = 1.0) -> "CostModel":
        return cls((0.0, 0.0) + (float(cost),) * num_subcarriers)

    @property
    def label_space(self) -> LabelSpace:
        return LabelSpace.from_size(len(self.costs))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.costs, dtype=float)

    def __len__(self) -> int:
        return len(self.costs)

    def __getitem__(self, index) -> float:
        return self.costs[index]


@dataclass(frozen=True)
class PredictiveDistribution:
    """A floored, normalized softmax vector. Build with :func:`normalize`."""

    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 3:
            raise ValueError("probs must be a 1-d vector of length S + 2 >= 3")
        if np.any(p < FLOOR_SLACK) or not np.all(np.isfinite(p)):
            raise ValueError("every probability must be finite and >= EPS_FLOOR")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return self.probs.size

    def __getitem__(self, index) -> float:
        return float(self.probs[index])

    def __eq__(self, other) -> bool:
        if not isinstance(other, PredictiveDistribution):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())

    @property
    def label_space(self) -> LabelSpace:
        return LabelSpace.from_size(self.probs.size)


def normalize(raw: Sequence[float], label_space: Optional[LabelSpace] = None) -> PredictiveDistribution:
    """Clamp ``raw`` to at least ``EPS_FLOOR`` and rescale it to sum to one.

    ``raw`` is first divided by its sum, so the result is scale invariant.

    Raises ``LengthMismatchError`` when ``label_space`` is given and the
    length differs from S + 2, and ``AllZeroError`` when no entry is positive.
    """
    v = np.asarray(raw, dtype=float)
    if v.ndim != 1:
        raise LengthMismatchError("raw scores must be a 1-d vector")
    if label_space is not None and v.size != label_space.size():
        raise LengthMismatchError(f"expected {label_space.size()} entries, got {v.size}")
    if v.size < 3:
        raise LengthMismatchError(f"need at least 3 labels, got {v.size}")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("raw scores must be finite and nonnegative")
    if not np.any(v > 0):
        raise AllZeroError("every raw score is zero")
    return PredictiveDistribution(normalize_rows(v))


def normalize_rows(raw: np.ndarray) -> np.ndarray:
    """Array version of :func:`normalize` applied along the last axis (no validation).

    Rows are scaled to unit sum before the clamp so the floor survives the
    final division whatever the scale of ``raw``.
    """
    v = np.asarray(raw, dtype=float)
    v = np.maximum(v / v.sum(axis=-1, keepdims=True), EPS_FLOOR)
    return v / v.sum(axis=-1, keepdims=True)


def point_estimate(dist: PredictiveDistribution) -> Label:
    """Most likely label; ties go to the smallest index."""
    # np.argmax returns the first maximal entry
    return dist.label_space.label(int(np.argmax(dist.probs)))


@dataclass(frozen=True)
class Example:
    dist: PredictiveDistribution
    true_label: Label
    raw_input_id: Optional[Hashable] = None

    def __post_init__(self):
        if not 0 <= self.true_label.index < len(self.dist):
            raise ValueError(
                f"true label index {self.true_label.index} outside distribution of length {len(self.dist)}"
            )

    @classmethod
    def from_arrays(cls, probs, label_index: int, raw_input_id=None) -> "Example":
        dist = normalize(probs)
        return cls(dist, dist.label_space.label(label_index), raw_input_id)
