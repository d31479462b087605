"""Monte Carlo runner for repeated calibration/test splits.

Each run is a work unit with its own RNG stream, so results do not depend
on how runs are spread over worker processes. Within a run every
calibration size is scored against the same test set.
Aggregation walks records in a fixed order before any float accumulation.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .budgetset import build_sets
from .conformal import CalibrationSet, Method, ScoreParams, bcp_alpha_batch, miscovered_batch, nme_alpha_batch
from .core import BCPError, CostModel
from .scenario import (
    Batch,
    OfdmScenarioConfig,
    Source,
    SyntheticDetectorConfig,
    generate_dataset,
    source_batch,
)

METRICS = ("emr", "tmr", "smd", "brier")
QUANTILES = (0.05, 0.25, 0.50, 0.75, 0.95)
RUNS_HEADER = ("run", "method", "K", "n_cal", "emr", "tmr", "smd", "brier")
AGGREGATE_HEADER = ("method", "K", "n_cal", "metric", "mean", "std", "q05", "q25", "q50", "q75", "q95")


class InsufficientData(BCPError):
    def __init__(self, required: int, available: int):
        super().__init__(f"need {required} examples for disjoint calibration/test splits, pool has {available}")
        self.required = required
        self.available = available


@dataclass(frozen=True)
class ExperimentConfig:
    n_runs: int = 500
    n_cal: tuple = (10, 50, 100, 500, 1000)
    n_te: int = 100
    budgets: tuple = (1.0, 2.0, 3.0)
    beta: float = 1.0
    costs: Optional[tuple] = None
    source: str = "synthetic"
    synthetic: SyntheticDetectorConfig = SyntheticDetectorConfig()
    ofdm: OfdmScenarioConfig = OfdmScenarioConfig()
    master_seed: int = 0
    split_mode: str = "regenerate"
    pool_n_per_label: int = 3000
    clip: bool = True

    def __post_init__(self):
        object.__setattr__(self, "n_cal", tuple(int(v) for v in np.atleast_1d(self.n_cal)))
        object.__setattr__(self, "budgets", tuple(float(v) for v in np.atleast_1d(self.budgets)))
        object.__setattr__(self, "source", Source(self.source).value)
        if self.n_runs < 1 or self.n_te < 1 or not self.n_cal or min(self.n_cal) < 1:
            raise ValueError("n_runs, n_te and every n_cal must be >= 1")
        if not self.budgets or min(self.budgets) < 0:
            raise ValueError("budgets must be nonnegative")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.split_mode not in ("regenerate", "fixed_pool"):
            raise ValueError(f"split_mode must be 'regenerate' or 'fixed_pool', got {self.split_mode!r}")
        if self.pool_n_per_label < 1:
            raise ValueError("pool_n_per_label must be >= 1")
        if self.costs is not None:
            object.__setattr__(self, "costs", CostModel(tuple(self.costs)).costs)
            if len(self.costs) != self.n_labels:
                raise ValueError(f"{len(self.costs)} costs for {self.n_labels} labels")

    @property
    def source_config(self):
        return self.synthetic if self.source == Source.SYNTHETIC.value else self.ofdm

    @property
    def n_labels(self) -> int:
        return self.source_config.n_labels

    def cost_model(self) -> CostModel:
        if self.costs is None:
            return CostModel.uniform(self.n_labels - 2)
        return CostModel(self.costs)


@dataclass(frozen=True)
class RunRecord:
    run: int
    method: str
    K: float
    n_cal: int
    emr: float
    tmr: float
    smd: float
    brier: float
    # sufficient statistics for the reliability ratio miss / alpha
    n_pairs: int = 0
    ratio_sum: float = 0.0
    ratio_sq_sum: float = 0.0


@dataclass(frozen=True)
class Reliability:
    mean: float
    stderr: float
    n_pairs: int

    @property
    def passed(self) -> bool:
        return math.isfinite(self.mean) and self.mean <= 1.0 + 3.0 * self.stderr


@dataclass
class AggregateReport:
    """Summaries keyed by ``(method, K, n_cal)``.

    ``summary[key][metric]`` holds mean, std and the quantiles of that metric
    across runs; ``reliability[key]`` holds the pooled ``miss / alpha``
    statistic.
    """

    config: ExperimentConfig
    summary: dict = field(default_factory=dict)
    reliability: dict = field(default_factory=dict)

    def cell(self, method, k, n_cal) -> dict:
        return self.summary[(Method(method).value, float(k), int(n_cal))]

    def rows(self) -> list[dict]:
        out = []
        for (method, k, n_cal), metrics in self.summary.items():
            for metric in METRICS:
                out.append({"method": method, "K": k, "n_cal": n_cal, "metric": metric, **metrics[metric]})
        return out


@dataclass
class ExperimentResult:
    records: list
    report: AggregateReport

    def values(self, method, k, n_cal, metric) -> np.ndarray:
        """Per-run values of ``metric`` for one grid cell, in run order."""
        method = Method(method).value
        return np.array(
            [getattr(r, metric) for r in self.records if r.method == method and r.K == float(k) and r.n_cal == n_cal]
        )


def _run_rng(master_seed: int, run: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(run)]))


def _split(config: ExperimentConfig, pool: Optional[Batch], run: int):
    """Test set and calibration candidates for one run.

    The first ``n_te`` draws form the test set; calibration sets of every
    size are prefixes of the remaining ``max(n_cal)`` draws, so a run
    compares calibration sizes on common data.
    """
    rng = _run_rng(config.master_seed, run)
    n = max(config.n_cal) + config.n_te
    if pool is None:
        data = source_batch(config.source, config.source_config, n, rng)
        probs, labels = data.probs, data.labels
    else:
        idx = rng.permutation(len(pool))[:n]
        probs, labels = pool.probs[idx], pool.labels[idx]
    te = config.n_te
    return probs[te:], labels[te:], probs[:te], labels[:te]


def _record(run, method, k, n_cal, alpha, miss) -> RunRecord:
    miss = miss.astype(float)
    # a covered point contributes 0 even when alpha is 0 (NME on a full set)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(miss > 0, miss / alpha, 0.0)
    return RunRecord(
        run=run,
        method=method.value,
        K=k,
        n_cal=n_cal,
        emr=float(np.mean(alpha)),
        tmr=float(np.mean(miss)),
        smd=float(np.mean(alpha - miss)),
        brier=float(np.mean((alpha - miss) ** 2)),
        n_pairs=int(alpha.size),
        ratio_sum=float(np.sum(ratio)),
        ratio_sq_sum=float(np.sum(ratio**2)),
    )


def run_unit(config: ExperimentConfig, run: int, pool: Optional[Batch] = None) -> list[RunRecord]:
    """All records for one run, over every calibration size, budget and method."""
    cal_p, cal_y, te_p, te_y = _split(config, pool, run)
    params = ScoreParams(config.beta)
    costs = config.cost_model().as_array()
    sets = {k: build_sets(te_p, costs, k) for k in config.budgets}
    misses = {k: miscovered_batch(sets[k], te_y) for k in config.budgets}
    records = []
    for n_cal in config.n_cal:
        cal = CalibrationSet.from_arrays(cal_p[:n_cal], cal_y[:n_cal], params)
        for k in config.budgets:
            # both estimators see the identical set
            alpha = bcp_alpha_batch(te_p, sets[k], cal, clip=config.clip)
            records.append(_record(run, Method.BCP, k, n_cal, alpha, misses[k]))
            records.append(_record(run, Method.NME, k, n_cal, nme_alpha_batch(te_p, sets[k]), misses[k]))
    return records


def _run_units(args):
    config, runs, pool = args
    return [run_unit(config, run, pool) for run in runs]


def _summarize(values: np.ndarray) -> dict:
    q = np.quantile(values, QUANTILES)
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    out = {"mean": float(np.mean(values)), "std": std}
    out.update({f"q{int(round(p * 100)):02d}": float(v) for p, v in zip(QUANTILES, q)})
    return out


def aggregate(config: ExperimentConfig, records: list) -> AggregateReport:
    records = sorted(records, key=lambda r: (r.n_cal, r.K, r.method, r.run))
    report = AggregateReport(config)
    cells: dict = {}
    for r in records:
        cells.setdefault((r.method, r.K, r.n_cal), []).append(r)
    for key in sorted(cells):
        rs = cells[key]
        report.summary[key] = {m: _summarize(np.array([getattr(r, m) for r in rs])) for m in METRICS}
        n = sum(r.n_pairs for r in rs)
        total = math.fsum(r.ratio_sum for r in rs)
        total_sq = math.fsum(r.ratio_sq_sum for r in rs)
        mean = total / n
        if not math.isfinite(total_sq):
            report.reliability[key] = Reliability(mean, math.inf, n)
            continue
        var = max(total_sq - n * mean * mean, 0.0) / (n - 1) if n > 1 else 0.0
        report.reliability[key] = Reliability(mean, math.sqrt(var / n), n)
    return report


def build_pool(config: ExperimentConfig) -> Batch:
    return generate_dataset(config.source, config.source_config, config.pool_n_per_label, config.master_seed)


def run_experiment(config: ExperimentConfig, workers: int = 1, pool: Optional[Batch] = None) -> ExperimentResult:
    """Run ``n_runs`` splits for every calibration size and aggregate.

    ``pool`` (e.g. a dataset read from CSV) forces fixed-pool mode: every run
    draws a fresh disjoint split from it. Otherwise ``split_mode`` decides
    between regenerating i.i.d. data per run and a balanced pregenerated pool.
    """
    if pool is None and config.split_mode == "fixed_pool":
        pool = build_pool(config)
    if pool is not None:
        if pool.probs.shape[1] != config.n_labels:
            raise ValueError(f"pool has {pool.probs.shape[1]} labels, config expects {config.n_labels}")
        required = max(config.n_cal) + config.n_te
        if len(pool) < required:
            raise InsufficientData(required, len(pool))

    units = list(range(config.n_runs))
    workers = max(1, int(workers))
    if workers == 1:
        chunks = _run_units((config, units, pool))
    else:
        size = math.ceil(len(units) / (4 * workers))
        batches = [(config, units[i : i + size], pool) for i in range(0, len(units), size)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            chunks = [c for part in ex.map(_run_units, batches) for c in part]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.n_cal, r.K, r.method, r.run))
    return ExperimentResult(records, aggregate(config, records))


# -- artifacts -------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _fmt_k(k: float) -> str:
    return str(int(k)) if float(k).is_integer() else repr(k)


def write_runs_csv(records, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUNS_HEADER)
        for r in records:
            w.writerow([r.run, r.method, _fmt_k(r.K), r.n_cal] + [_fmt(getattr(r, m)) for m in METRICS])


def write_aggregate_csv(report: AggregateReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_HEADER)
        for row in report.rows():
            stats = [_fmt(row[c]) for c in AGGREGATE_HEADER[4:]]
            w.writerow([row["method"], _fmt_k(row["K"]), row["n_cal"], row["metric"]] + stats)


def config_to_dict(config: ExperimentConfig) -> dict:
    return dataclasses.asdict(config)


def reliability_to_list(report: AggregateReport) -> list[dict]:
    out = []
    for (method, k, n_cal), rel in report.reliability.items():
        entry = {
            "method": method,
            "K": k,
            "n_cal": n_cal,
            "mean": rel.mean,
            "stderr": rel.stderr,
            "n_pairs": rel.n_pairs,
            "bound": 1.0 + 3.0 * rel.stderr,
        }
        # only BCP carries the guarantee; NME is reported for comparison
        if method == Method.BCP.value:
            entry["status"] = "PASS" if rel.passed else "FAIL"
        out.append(entry)
    return out
