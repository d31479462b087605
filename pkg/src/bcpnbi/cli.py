"""Command-line front end: ``generate``, ``run``, ``sweep`` and ``validate``.

Settings come from built-in defaults, then an optional JSON config file,
then flags. A flag always wins over the file; giving the same flag twice
with different values is an error.

Exit codes: 0 success, 2 config error, 3 data error, 4 validation failure.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import itertools
import json
import math
import os
import sys
from pathlib import Path

from .core import BCPError
from .harness import (
    ExperimentConfig,
    InsufficientData,
    reliability_to_list,
    run_experiment,
    write_aggregate_csv,
    write_runs_csv,
)
from .scenario import OfdmScenarioConfig, Source, SyntheticDetectorConfig, generate_dataset, read_dataset_csv, write_dataset_csv
from .validate import CORRUPTIONS, run_suite

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_VALIDATION = 0, 2, 3, 4

_EXPERIMENT_KEYS = [f.name for f in dataclasses.fields(ExperimentConfig) if f.name not in ("synthetic", "ofdm", "master_seed")]

DEFAULTS = {
    "seed": None,
    "workers": None,
    "output_dir": "results",
    "dataset": None,
    "experiment": {k: v for k, v in dataclasses.asdict(ExperimentConfig()).items() if k in _EXPERIMENT_KEYS},
    "synthetic": dataclasses.asdict(SyntheticDetectorConfig()),
    "ofdm": dataclasses.asdict(OfdmScenarioConfig(monitored_bins=None)) | {"monitored_bins": None},
    "generate": {"n_per_label": 3000, "out": "dataset.csv"},
    "sweep": {"betas": [1.0], "temperatures": [1.0], "n_te_values": None},
}


class ConfigError(BCPError):
    pass


# (flag, config path, parser kind)
_SOURCE_FLAGS = [
    ("--source", ("experiment", "source"), str),
]
_SYNTHETIC_FLAGS = [
    ("--num-subcarriers", ("synthetic", "num_subcarriers"), int),
    ("--confusion-scale", ("synthetic", "confusion_scale"), float),
    ("--temperature", ("synthetic", "temperature"), float),
    ("--margin", ("synthetic", "margin"), float),
    ("--class-prior", ("synthetic", "class_prior"), "floats"),
]
_OFDM_FLAGS = [
    ("--num-bins", ("ofdm", "num_bins"), int),
    ("--num-symbols", ("ofdm", "num_symbols"), int),
    ("--snr-db", ("ofdm", "snr_db"), float),
    ("--sir-db", ("ofdm", "sir_db"), float),
    ("--monitored-bins", ("ofdm", "monitored_bins"), "ints"),
    ("--assumed-noise-power", ("ofdm", "assumed_noise_power"), float),
    ("--signal-model", ("ofdm", "signal_model"), str),
]
_RUN_FLAGS = [
    ("--n-runs", ("experiment", "n_runs"), int),
    ("--n-cal", ("experiment", "n_cal"), "ints"),
    ("--n-te", ("experiment", "n_te"), int),
    ("--budgets", ("experiment", "budgets"), "floats"),
    ("--beta", ("experiment", "beta"), float),
    ("--costs", ("experiment", "costs"), "floats"),
    ("--split-mode", ("experiment", "split_mode"), str),
    ("--pool-n-per-label", ("experiment", "pool_n_per_label"), int),
    ("--dataset", ("dataset",), str),
    ("--out-dir", ("output_dir",), str),
    ("--workers", ("workers",), int),
]
_SWEEP_FLAGS = [
    ("--betas", ("sweep", "betas"), "floats"),
    ("--temperatures", ("sweep", "temperatures"), "floats"),
    ("--n-te-values", ("sweep", "n_te_values"), "ints"),
]
_GENERATE_FLAGS = [
    ("--n-per-label", ("generate", "n_per_label"), int),
    ("--out", ("generate", "out"), str),
]


def _parse_list(kind):
    cast = int if kind == "ints" else float

    def parse(text):
        try:
            return [cast(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list of {kind}, got {text!r}")

    return parse


class _Once(argparse.Action):
    """Store a value; reject a repeated flag that disagrees with the first."""

    def __call__(self, parser, namespace, values, option_string=None):
        previous = getattr(namespace, self.dest, None)
        if previous is not None and previous != values:
            parser.error(f"conflicting values for {option_string}: {previous!r} and {values!r}")
        setattr(namespace, self.dest, values)


_HELP = {
    "--source": "synthetic or ofdm",
    "--num-subcarriers": "number of monitored subcarriers S",
    "--confusion-scale": "std dev of the logit noise",
    "--temperature": "softmax temperature; 1 is calibrated, < 1 overconfident",
    "--margin": "logit boost of the true label",
    "--class-prior": "comma-separated label prior (S + 2 entries)",
    "--num-bins": "FFT size",
    "--num-symbols": "OFDM symbols per observation",
    "--snr-db": "per-bin WiFi power over noise power, dB",
    "--sir-db": "per-bin WiFi power over tone power, dB",
    "--monitored-bins": "comma-separated FFT bins watched for interference",
    "--assumed-noise-power": "noise power the detector believes in (default: true value)",
    "--signal-model": "qpsk or gaussian WiFi symbols",
    "--n-runs": "independent calibration/test splits",
    "--n-cal": "comma-separated calibration sizes",
    "--n-te": "test points per run",
    "--budgets": "comma-separated budgets K",
    "--beta": "score exponent",
    "--costs": "comma-separated per-label costs (first two must be 0)",
    "--split-mode": "regenerate or fixed_pool",
    "--pool-n-per-label": "pool size per label in fixed_pool mode",
    "--dataset": "CSV of detector outputs to split instead of simulating",
    "--out-dir": "output directory",
    "--workers": "worker processes (default: CPU count); results do not depend on it",
    "--betas": "comma-separated beta values to sweep",
    "--temperatures": "comma-separated temperatures to sweep",
    "--n-te-values": "comma-separated test sizes to sweep",
    "--n-per-label": "examples per label",
    "--out": "output CSV path",
}


def _add_flags(parser, table):
    for flag, path, kind in table:
        typ = _parse_list(kind) if kind in ("ints", "floats") else kind
        metavar = "LIST" if kind in ("ints", "floats") else flag.lstrip("-").replace("-", "_").upper()
        parser.add_argument(
            flag, dest="cfg__" + "__".join(path), type=typ, action=_Once, default=None, metavar=metavar,
            help=_HELP.get(flag),
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcpnbi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=int, action=_Once, default=None, help="master seed (falls back to $BCP_SEED, then 0)")

    gen = sub.add_parser("generate", help="write a detector-output dataset as CSV")
    common(gen)
    _add_flags(gen, _GENERATE_FLAGS + _SOURCE_FLAGS + _SYNTHETIC_FLAGS + _OFDM_FLAGS)

    run = sub.add_parser("run", help="Monte Carlo calibration/test experiment")
    common(run)
    _add_flags(run, _RUN_FLAGS + _SOURCE_FLAGS + _SYNTHETIC_FLAGS + _OFDM_FLAGS)
    run.add_argument("--no-clip", dest="cfg__experiment__clip", action="store_const", const=False, default=None,
                     help="do not cap BCP estimates at 1")

    sweep = sub.add_parser("sweep", help="run over a grid of beta / temperature / test sizes")
    common(sweep)
    _add_flags(sweep, _RUN_FLAGS + _SWEEP_FLAGS + _SOURCE_FLAGS + _SYNTHETIC_FLAGS + _OFDM_FLAGS)
    sweep.add_argument("--no-clip", dest="cfg__experiment__clip", action="store_const", const=False, default=None,
                     help="do not cap BCP estimates at 1")

    val = sub.add_parser("validate", help="deterministic invariant suite")
    val.add_argument("--seed", type=int, default=None, help="suite seed (falls back to $BCP_SEED, then 0)")
    val.add_argument("--instances", type=int, default=1000, help="random instances per check")
    val.add_argument("--corrupt", choices=CORRUPTIONS, default=None, help="inject a fault (negative control)")
    return parser


# -- config resolution --------------------------------------------------------------

def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _flag_overrides(args) -> dict:
    out: dict = {}
    for name, value in vars(args).items():
        if not name.startswith("cfg__") or value is None:
            continue
        *parents, leaf = name[5:].split("__")
        node = out
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return out


def _check_source_flags(flags: dict, source: str, command: str) -> None:
    other = "ofdm" if source == Source.SYNTHETIC.value else "synthetic"
    if flags.get(other):
        keys = ", ".join(f"{other}.{k}" for k in flags[other])
        raise ConfigError(f"flags for {keys} conflict with source '{source}'")
    if command != "generate" and flags.get("dataset") and (flags.get("synthetic") or flags.get("ofdm")):
        raise ConfigError("detector flags conflict with --dataset, which supplies detector outputs directly")


def resolve_config(args) -> dict:
    doc = DEFAULTS
    if getattr(args, "config", None) is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}")
        if not isinstance(loaded, dict):
            raise ConfigError("config root must be an object")
        doc = _merge(doc, loaded)
    flags = _flag_overrides(args)
    doc = _merge(doc, flags)
    _check_source_flags(flags, doc["experiment"]["source"], args.command)

    if args.seed is not None:
        doc["seed"] = args.seed
    if doc["seed"] is None:
        env = os.environ.get("BCP_SEED")
        try:
            doc["seed"] = int(env) if env else 0
        except ValueError:
            raise ConfigError(f"BCP_SEED must be an integer, got {env!r}")
    if doc["workers"] is None:
        doc["workers"] = os.cpu_count() or 1
    return doc


def _build(cls, section: str, values: dict):
    try:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in values.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' settings: {exc}")


def experiment_from_doc(doc: dict) -> ExperimentConfig:
    synthetic = _build(SyntheticDetectorConfig, "synthetic", doc["synthetic"])
    ofdm = _build(OfdmScenarioConfig, "ofdm", doc["ofdm"])
    values = dict(doc["experiment"], synthetic=synthetic, ofdm=ofdm, master_seed=doc["seed"])
    return _build(ExperimentConfig, "experiment", values)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _effective(doc: dict, config: ExperimentConfig) -> dict:
    out = copy.deepcopy(doc)
    out["experiment"] = {k: v for k, v in dataclasses.asdict(config).items() if k in _EXPERIMENT_KEYS}
    out["synthetic"] = dataclasses.asdict(config.synthetic)
    out["ofdm"] = dataclasses.asdict(config.ofdm)
    out.pop("workers", None)  # results do not depend on it
    return out


# -- commands ------------------------------------------------------------------------

def cmd_generate(doc: dict) -> int:
    n = doc["generate"]["n_per_label"]
    if not isinstance(n, int) or n < 1:
        raise ConfigError(f"generate.n_per_label must be a positive integer, got {n!r}")
    config = experiment_from_doc(doc)
    batch = generate_dataset(config.source, config.source_config, n, doc["seed"])
    out = Path(doc["generate"]["out"])
    if out.parent != Path("."):
        out.parent.mkdir(parents=True, exist_ok=True)
    rows = write_dataset_csv(batch, out)
    print(f"wrote {rows} rows to {out}")
    return EXIT_OK


def _load_pool(doc: dict, config: ExperimentConfig):
    """Read ``--dataset`` if given; the label space then comes from the file."""
    if not doc["dataset"]:
        return config, None
    pool = read_dataset_csv(doc["dataset"])
    n_labels = pool.probs.shape[1]
    if n_labels != config.n_labels:
        synthetic = dataclasses.replace(config.synthetic, num_subcarriers=n_labels - 2)
        try:
            config = dataclasses.replace(config, source=Source.SYNTHETIC.value, synthetic=synthetic)
        except ValueError as exc:
            raise ConfigError(f"dataset with {n_labels} labels does not fit the config: {exc}")
    return config, pool


def _execute(doc: dict, config: ExperimentConfig, out_dir: Path) -> bool:
    config, pool = _load_pool(doc, config)
    result = run_experiment(config, workers=doc["workers"], pool=pool)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_runs_csv(result.records, out_dir / "runs.csv")
    write_aggregate_csv(result.report, out_dir / "aggregate.csv")
    reliability = reliability_to_list(result.report)
    passed = all(r.get("status", "PASS") == "PASS" for r in reliability)
    report = {
        "config": _effective(doc, config),
        "reliability": reliability,
        "reliability_check": "PASS" if passed else "FAIL",
    }
    (out_dir / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")

    print(f"{'method':6} {'K':>5} {'n_cal':>6} {'EMR':>8} {'TMR':>8} {'Brier':>8} {'E[m/a]':>9}  check")
    for r in reliability:
        cell = result.report.cell(r["method"], r["K"], r["n_cal"])
        print(
            f"{r['method']:6} {r['K']:5g} {r['n_cal']:6d} {cell['emr']['mean']:8.4f} {cell['tmr']['mean']:8.4f} "
            f"{cell['brier']['mean']:8.4f} {r['mean']:9.4f}  {r.get('status', '-')}"
        )
    print(f"wrote {out_dir / 'runs.csv'}, {out_dir / 'aggregate.csv'}, {out_dir / 'report.json'}")
    return passed


def cmd_run(doc: dict) -> int:
    config = experiment_from_doc(doc)
    passed = _execute(doc, config, Path(doc["output_dir"]))
    return EXIT_OK if passed else EXIT_VALIDATION


def cmd_sweep(doc: dict) -> int:
    sweep = doc["sweep"]
    base = experiment_from_doc(doc)
    n_te_values = sweep["n_te_values"] or [base.n_te]
    index = []
    all_passed = True
    for beta, temp, n_te in itertools.product(sweep["betas"], sweep["temperatures"], n_te_values):
        try:
            synthetic = dataclasses.replace(base.synthetic, temperature=temp)
            config = dataclasses.replace(base, beta=beta, n_te=n_te, synthetic=synthetic)
        except ValueError as exc:
            raise ConfigError(f"invalid sweep point beta={beta}, temperature={temp}, n_te={n_te}: {exc}")
        name = f"beta={beta:g}_temperature={temp:g}_nte={n_te}"
        print(f"== {name}")
        passed = _execute(doc, config, Path(doc["output_dir"]) / name)
        all_passed &= passed
        index.append({"dir": name, "beta": beta, "temperature": temp, "n_te": n_te, "reliability_check": "PASS" if passed else "FAIL"})
    out = Path(doc["output_dir"]) / "sweep.json"
    out.write_text(json.dumps(index, indent=2) + "\n")
    return EXIT_OK if all_passed else EXIT_VALIDATION


def cmd_validate(args) -> int:
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get("BCP_SEED") or 0)
    if args.instances < 1:
        raise ConfigError("--instances must be >= 1")
    results = run_suite(seed=seed, instances=args.instances, corrupt=args.corrupt)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        doc = resolve_config(args)
        command = {"generate": cmd_generate, "run": cmd_run, "sweep": cmd_sweep}[args.command]
        return command(doc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientData as exc:
        print(f"data error: {exc} (required {exc.required}, available {exc.available})", file=sys.stderr)
        return EXIT_DATA
    except (OSError, BCPError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
