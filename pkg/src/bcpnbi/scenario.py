"""Reproducible data sources that stand in for a trained NBI detector.

``synthetic``
    Gaussian logits around a one-hot margin. At ``temperature=1`` the softmax
    is the exact Bayes posterior, so the detector is calibrated by
    construction. ``temperature < 1`` makes it overconfident.

``ofdm``
    Frequency-domain OFDM symbols with an optional narrowband tone on one
    monitored bin, scored by a Gaussian energy detector. With
    ``signal_model="gaussian"`` and a matched noise power the detector output
    is the exact posterior.

Every sampler is a pure function of ``(config, seed)``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import softmax

from .core import BCPError, Example, LabelSpace, PredictiveDistribution, normalize_rows


class ConfigError(BCPError, ValueError):
    pass


class Source(str, enum.Enum):
    SYNTHETIC = "synthetic"
    OFDM = "ofdm"


@dataclass(frozen=True)
class SyntheticDetectorConfig:
    num_subcarriers: int = 4
    confusion_scale: float = 1.0
    temperature: float = 1.0
    margin: float = 2.5
    class_prior: Optional[tuple] = None

    def __post_init__(self):
        LabelSpace(self.num_subcarriers)
        if not self.confusion_scale > 0:
            raise ConfigError("confusion_scale must be positive")
        if not self.temperature > 0:
            raise ConfigError("temperature must be positive")
        if self.class_prior is not None:
            prior = tuple(float(v) for v in self.class_prior)
            if len(prior) != self.num_subcarriers + 2:
                raise ConfigError(f"class_prior needs {self.num_subcarriers + 2} entries, got {len(prior)}")
            if min(prior) < 0 or abs(sum(prior) - 1.0) > 1e-9:
                raise ConfigError("class_prior must be a probability vector")
            object.__setattr__(self, "class_prior", prior)

    @property
    def n_labels(self) -> int:
        return self.num_subcarriers + 2

    def prior(self) -> np.ndarray:
        if self.class_prior is None:
            return np.full(self.n_labels, 1.0 / self.n_labels)
        return np.asarray(self.class_prior)


def default_monitored_bins(num_bins: int, num_subcarriers: int) -> tuple:
    step = num_bins // num_subcarriers
    return tuple(step // 2 + i * step for i in range(num_subcarriers))


@dataclass(frozen=True)
class OfdmScenarioConfig:
    num_bins: int = 64
    num_symbols: int = 8
    snr_db: float = 10.0
    sir_db: float = 5.0
    monitored_bins: Optional[tuple] = None
    assumed_noise_power: Optional[float] = None
    signal_model: str = "qpsk"

    def __post_init__(self):
        if self.num_bins < 2:
            raise ConfigError("num_bins must be at least 2")
        if self.num_symbols < 1:
            raise ConfigError("num_symbols must be at least 1")
        bins = self.monitored_bins
        if bins is None:
            bins = default_monitored_bins(self.num_bins, 4)
        bins = tuple(int(b) for b in bins)
        if not bins:
            raise ConfigError("at least one monitored bin is required")
        if len(set(bins)) != len(bins):
            raise ConfigError(f"monitored bins collide: {bins}")
        if any(not 0 <= b < self.num_bins for b in bins):
            raise ConfigError(f"monitored bins must lie in [0, {self.num_bins})")
        if len(bins) >= self.num_bins:
            raise ConfigError("at least one bin must stay unmonitored")
        object.__setattr__(self, "monitored_bins", bins)
        if self.assumed_noise_power is not None and not self.assumed_noise_power > 0:
            raise ConfigError("assumed_noise_power must be positive")
        if self.signal_model not in ("qpsk", "gaussian"):
            raise ConfigError(f"signal_model must be 'qpsk' or 'gaussian', got {self.signal_model!r}")

    @property
    def num_subcarriers(self) -> int:
        return len(self.monitored_bins)

    @property
    def n_labels(self) -> int:
        return self.num_subcarriers + 2

    @property
    def window_length(self) -> int:
        return self.num_bins * self.num_symbols

    @property
    def noise_power(self) -> float:
        # per-bin WiFi power is 1
        return 10.0 ** (-self.snr_db / 10.0)

    @property
    def tone_power(self) -> float:
        return 10.0 ** (-self.sir_db / 10.0)

    @property
    def detector_noise_power(self) -> float:
        return self.noise_power if self.assumed_noise_power is None else float(self.assumed_noise_power)


@dataclass(frozen=True)
class ScenarioSample:
    example: Example
    iq: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True)
class Batch:
    """Softmax rows and labels for ``n`` draws; ``iq`` only for OFDM."""

    probs: np.ndarray
    labels: np.ndarray
    iq: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.labels.size

    def examples(self) -> list[Example]:
        space = LabelSpace.from_size(self.probs.shape[1])
        return [
            Example(PredictiveDistribution(p), space.label(y)) for p, y in zip(self.probs, self.labels)
        ]


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def example_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Seed for example ``index``; independent of generation order."""
    return np.random.SeedSequence([int(master_seed), int(index)])


# -- synthetic detector -------------------------------------------------------

def synthetic_probs(config: SyntheticDetectorConfig, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    n, n_labels = labels.size, config.n_labels
    z = config.confusion_scale * rng.standard_normal((n, n_labels))
    z[np.arange(n), labels] += config.margin
    # posterior log-odds of the Gaussian model are margin * z / scale^2
    logits = (config.margin / config.confusion_scale**2) * z / config.temperature
    logits = logits + np.log(np.maximum(config.prior(), 1e-300))
    return normalize_rows(softmax(logits, axis=1))


def synthetic_batch(config: SyntheticDetectorConfig, n: int, seed) -> Batch:
    rng = _as_rng(seed)
    labels = rng.choice(config.n_labels, size=n, p=config.prior())
    return Batch(synthetic_probs(config, labels, rng), labels)


def sample_synthetic(config: SyntheticDetectorConfig, rng_seed) -> ScenarioSample:
    batch = synthetic_batch(config, 1, rng_seed)
    return ScenarioSample(batch.examples()[0])


# -- OFDM scenario -------------------------------------------------------------

def ofdm_symbols(config: OfdmScenarioConfig, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Frequency-domain samples of shape (n, num_symbols, num_bins)."""
    labels = np.asarray(labels, dtype=int)
    n = labels.size
    shape = (n, config.num_symbols, config.num_bins)

    def cgauss(power, size):
        return math.sqrt(power / 2.0) * (rng.standard_normal(size) + 1j * rng.standard_normal(size))

    y = cgauss(config.noise_power, shape)
    wifi = labels >= LabelSpace.WIFI_ONLY
    if config.signal_model == "qpsk":
        bits = rng.integers(0, 2, size=(2,) + shape)
        data = ((2 * bits[0] - 1) + 1j * (2 * bits[1] - 1)) / math.sqrt(2.0)
    else:
        data = cgauss(1.0, shape)
    y += np.where(wifi[:, None, None], data, 0.0)

    phase = rng.uniform(0.0, 2 * np.pi, size=(n, config.num_symbols))
    hit = np.flatnonzero(labels >= 2)
    if hit.size:
        bins = np.asarray(config.monitored_bins)[labels[hit] - 2]
        tone = math.sqrt(config.tone_power) * np.exp(1j * phase[hit])
        y[hit[:, None], np.arange(config.num_symbols)[None, :], bins[:, None]] += tone
    return y


def symbols_to_iq(symbols: np.ndarray) -> np.ndarray:
    n = symbols.shape[0]
    return np.fft.ifft(symbols, axis=-1, norm="ortho").reshape(n, -1)


def iq_to_symbols(iq: np.ndarray, num_bins: int) -> np.ndarray:
    iq = np.atleast_2d(iq)
    return np.fft.fft(iq.reshape(iq.shape[0], -1, num_bins), axis=-1, norm="ortho")


def bin_energies(iq: np.ndarray, config: OfdmScenarioConfig) -> np.ndarray:
    """Per-bin energy averaged over symbols, shape (n, num_bins)."""
    return np.mean(np.abs(iq_to_symbols(iq, config.num_bins)) ** 2, axis=1)


def detector_log_likelihoods(energies: np.ndarray, config: OfdmScenarioConfig) -> np.ndarray:
    """Gaussian log-likelihood of each hypothesis from per-bin energies, shape (n, S+2)."""
    energies = np.atleast_2d(np.asarray(energies, dtype=float))
    mon = np.asarray(config.monitored_bins)
    rest = np.ones(config.num_bins, dtype=bool)
    rest[mon] = False
    e_mon = energies[:, mon]
    e_rest = energies[:, rest].sum(axis=1)
    n_rest = int(rest.sum())

    noise = config.detector_noise_power
    wifi = 1.0 + noise
    tone = wifi + config.tone_power

    def loglik(var, e):
        return -np.log(var) - e / var

    quiet = loglik(noise, e_mon).sum(axis=1) + n_rest * -np.log(noise) - e_rest / noise
    clean_mon = loglik(wifi, e_mon)
    clean = clean_mon.sum(axis=1) + n_rest * -np.log(wifi) - e_rest / wifi
    # interference on bin s swaps that bin's clean term for the tone term
    interfered = clean[:, None] - clean_mon + loglik(tone, e_mon)
    ll = np.column_stack([quiet, clean, interfered])
    return config.num_symbols * ll


def bayes_energy_detector(observation: np.ndarray, config: OfdmScenarioConfig, energies: bool = False) -> np.ndarray:
    """Posterior over the S+2 hypotheses under a uniform prior.

    ``observation`` is either time-domain I/Q of shape (n, M) or, with
    ``energies=True``, per-bin energies of shape (n, num_bins). A single
    observation may be passed as a 1-d array.
    """
    single = np.ndim(observation) == 1
    e = np.atleast_2d(observation) if energies else bin_energies(observation, config)
    probs = normalize_rows(softmax(detector_log_likelihoods(e, config), axis=1))
    return probs[0] if single else probs


def ofdm_batch(config: OfdmScenarioConfig, n: int, seed, labels=None, keep_iq: bool = False) -> Batch:
    rng = _as_rng(seed)
    if labels is None:
        labels = rng.integers(0, config.n_labels, size=n)
    labels = np.asarray(labels, dtype=int)
    symbols = ofdm_symbols(config, labels, rng)
    energies = np.mean(np.abs(symbols) ** 2, axis=1)
    probs = normalize_rows(softmax(detector_log_likelihoods(energies, config), axis=1))
    return Batch(probs, labels, symbols_to_iq(symbols) if keep_iq else None)


def sample_ofdm(config: OfdmScenarioConfig, rng_seed) -> ScenarioSample:
    rng = _as_rng(rng_seed)
    label = int(rng.integers(0, config.n_labels))
    symbols = ofdm_symbols(config, np.array([label]), rng)
    iq = symbols_to_iq(symbols)
    probs = bayes_energy_detector(iq, config)
    return ScenarioSample(Example.from_arrays(probs[0], label), iq[0])


# -- datasets -------------------------------------------------------------------

def source_batch(source: Source | str, config, n: int, seed) -> Batch:
    """``n`` i.i.d. draws from ``source`` (labels from the class prior)."""
    if Source(source) is Source.SYNTHETIC:
        return synthetic_batch(config, n, seed)
    return ofdm_batch(config, n, seed)


def generate_dataset(source: Source | str, config, n_per_label: int, master_seed: int) -> Batch:
    """Class-balanced dataset; example ``i`` has label ``i // n_per_label``.

    Each example draws from its own stream seeded by ``(master_seed, i)``,
    so any subset can be regenerated independently of the rest.
    """
    if int(n_per_label) < 1:
        raise ConfigError(f"n_per_label must be >= 1, got {n_per_label}")
    source = Source(source)
    n_labels = config.n_labels
    total = n_per_label * n_labels
    labels = np.arange(total) // n_per_label
    probs = np.empty((total, n_labels))
    for i in range(total):
        rng = np.random.default_rng(example_seed(master_seed, i))
        label = labels[i : i + 1]
        if source is Source.SYNTHETIC:
            probs[i] = synthetic_probs(config, label, rng)[0]
        else:
            probs[i] = ofdm_batch(config, 1, rng, labels=label).probs[0]
    return Batch(probs, labels)


def write_dataset_csv(batch: Batch, path: str | Path) -> int:
    """Write ``label_index, p_0 ... p_{S+1}`` rows; returns the row count."""
    n_labels = batch.probs.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label_index"] + [f"p_{i}" for i in range(n_labels)])
        for y, row in zip(batch.labels, batch.probs):
            writer.writerow([int(y)] + [repr(float(v)) for v in row])
    return len(batch)


def read_dataset_csv(path: str | Path) -> Batch:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "label_index" or len(header) < 4:
            raise ConfigError(f"{path}: expected header 'label_index,p_0,...'")
        expected = [f"p_{i}" for i in range(len(header) - 1)]
        if header[1:] != expected:
            raise ConfigError(f"{path}: probability columns must be {','.join(expected)}")
        rows = [r for r in reader if r]
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    labels = np.array([int(r[0]) for r in rows])
    probs = np.array([[float(v) for v in r[1:]] for r in rows])
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise ConfigError(f"{path}: label index outside [0, {probs.shape[1] - 1}]")
    if np.any(probs < 0) or np.any(probs.sum(axis=1) <= 0):
        raise ConfigError(f"{path}: probabilities must be nonnegative with a positive row sum")
    return Batch(normalize_rows(probs), labels)
