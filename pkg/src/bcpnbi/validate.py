"""Deterministic invariant suite run by ``bcpnbi validate``.

Each check compares the library against a slow, independent computation on
random instances. ``corrupt`` injects a known fault so the suite can be
shown to fail (negative control).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import SimpleNamespace
from typing import Callable, Optional

import numpy as np

from . import conformal
from .budgetset import build_set, build_sets
from .conformal import CalibrationSet, bcp_alpha
from .core import CostModel, normalize
from .estimator import BackwardConformalClassifier

CORRUPTIONS = ("e-value", "cmax")


@dataclass
class CheckResult:
    name: str
    passed: bool
    instances: int
    failures: int
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{flag}] {self.name}: {self.failures}/{self.instances} violations{extra}"


def random_instance(rng: np.random.Generator, distinct: bool = True):
    """A random (distribution, cost model, budget) triple with S in [1, 8]."""
    s = int(rng.integers(1, 9))
    n = s + 2
    while True:
        p = rng.dirichlet(np.full(n, rng.uniform(0.2, 2.0)))
        dist = normalize(p)
        if not distinct or np.unique(dist.probs).size == n:
            break
    costs = CostModel((0.0, 0.0) + tuple(rng.uniform(0.05, 1.0, size=s)))
    k = float(rng.uniform(0.0, sum(costs.costs) + 0.5))
    return dist, costs, k


def brute_force_cmax(probs, costs, k) -> int:
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    best = 0
    for m in range(len(probs) + 1):
        if math.fsum(costs[i] for i in order[:m]) <= k + 1e-12:
            best = m
    return best


def brute_force_threshold(probs, c_max) -> Optional[float]:
    """Smallest grid threshold whose strict-superset rule keeps at most ``c_max`` labels."""
    for lam in sorted({0.0, *map(float, probs)}):
        if sum(1 for p in probs if p > lam) <= c_max:
            return None if lam == 0.0 else lam
    raise AssertionError("the largest probability always satisfies the size bound")


def _e_value_corrupt(test_score, cal):
    return test_score * cal.n_cal / (cal.score_sum + test_score)


def check_exchangeability(rng, instances: int) -> CheckResult:
    fails = 0
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 201))
        scores = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), size=n))
        full = math.fsum(scores)
        total = 0.0
        for j in range(n):
            # e_value only reads n_cal and score_sum
            cal = SimpleNamespace(n_cal=n - 1, score_sum=full - scores[j])
            total += conformal.e_value(scores[j], cal)
        err = abs(total / n - 1.0)
        worst = max(worst, err)
        fails += err > 1e-10
    return CheckResult("exchangeability identity", fails == 0, instances, fails, f"max |mean E - 1| = {worst:.2e}")


def check_invariances(rng, instances: int) -> CheckResult:
    fails = 0
    for _ in range(instances):
        dist, costs, k = random_instance(rng, distinct=False)
        result = build_set(dist, costs, k)
        n_cal = int(rng.integers(1, 100))
        scores = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=n_cal))
        base = bcp_alpha(dist, result, CalibrationSet.from_scores(scores), clip=False).value
        perm = bcp_alpha(dist, result, CalibrationSet.from_scores(rng.permutation(scores)), clip=False).value
        ok = math.isclose(perm, base, rel_tol=1e-10)
        if not result.is_full:
            s = conformal.nc_score(result.lambda_star)
            for c in (1e-3, 1.0, 1e3):
                e = conformal.e_value(c * s, CalibrationSet.from_scores(c * scores))
                ok &= math.isclose(min(1.0 / e, 1.0), min(base, 1.0), rel_tol=1e-10)
        cal_p = rng.dirichlet(np.ones(len(dist)), size=5)
        cal_y = rng.integers(0, len(dist), size=5)
        masks = [
            BackwardConformalClassifier(costs.costs, k, beta).fit(cal_p, cal_y).predict(dist.probs[None, :])
            for beta in (0.5, 1.0, 2.0)
        ]
        ok &= all(np.array_equal(m, masks[0]) for m in masks)
        fails += not ok
    return CheckResult("scale / permutation / beta invariance", fails == 0, instances, fails)


def check_threshold_oracle(rng, instances: int) -> CheckResult:
    fails = 0
    for _ in range(instances):
        dist, costs, k = random_instance(rng)
        result = build_set(dist, costs, k)
        lam = brute_force_threshold(dist.probs, result.c_max)
        ok = lam == result.lambda_star
        members = {i for i, p in enumerate(dist.probs) if lam is None or p > lam}
        ok &= members == {lab.index for lab in result.included}
        fails += not ok
    return CheckResult("threshold oracle equivalence", fails == 0, instances, fails)


def check_cmax(rng, instances: int, corrupt: Optional[str] = None) -> CheckResult:
    fails = 0
    for _ in range(instances):
        dist, costs, k = random_instance(rng, distinct=False)
        c_max = build_set(dist, costs, k).c_max
        if corrupt == "cmax":
            c_max = min(c_max + 1, len(dist))
        ok = c_max == brute_force_cmax(dist.probs, costs.costs, k)
        ok &= int(build_sets(dist.probs, costs, k).c_max[0]) == c_max
        ok &= build_set(dist, costs, k + 0.25).c_max >= c_max
        fails += not ok
    return CheckResult("C_max prefix-sum oracle and monotonicity", fails == 0, instances, fails)


def run_suite(seed: int = 0, instances: int = 1000, corrupt: Optional[str] = None) -> list[CheckResult]:
    if corrupt is not None and corrupt not in CORRUPTIONS:
        raise ValueError(f"unknown corruption {corrupt!r}; choose from {CORRUPTIONS}")
    rng = np.random.default_rng(seed)
    original: Callable = conformal.e_value
    if corrupt == "e-value":
        conformal.e_value = _e_value_corrupt
    try:
        return [
            check_exchangeability(rng, instances),
            check_invariances(rng, instances),
            check_threshold_oracle(rng, instances),
            check_cmax(rng, instances, corrupt),
        ]
    finally:
        conformal.e_value = original
