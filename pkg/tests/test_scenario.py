import numpy as np
import pytest
from scipy import integrate, stats

from bcpnbi.core import LabelSpace
from bcpnbi.metrics import expected_calibration_error, reliability_slope
from bcpnbi.scenario import (
    ConfigError,
    OfdmScenarioConfig,
    SyntheticDetectorConfig,
    bayes_energy_detector,
    bin_energies,
    generate_dataset,
    ofdm_batch,
    ofdm_symbols,
    read_dataset_csv,
    sample_ofdm,
    sample_synthetic,
    symbols_to_iq,
    synthetic_batch,
    write_dataset_csv,
)


def gaussian_argmax_accuracy(margin, sigma, n_labels):
    """P(true logit is largest) for z_y = margin + sigma*N, z_j = sigma*N."""
    f = lambda t: stats.norm.pdf(t) * stats.norm.cdf(t + margin / sigma) ** (n_labels - 1)
    return integrate.quad(f, -np.inf, np.inf)[0]


# -- synthetic detector ------------------------------------------------------


def test_noiseless_limit_is_certain():
    batch = synthetic_batch(SyntheticDetectorConfig(confusion_scale=1e-3), 500, 1)
    assert np.all(batch.probs.argmax(axis=1) == batch.labels)
    assert batch.probs[np.arange(500), batch.labels].min() > 1 - 1e-9


def test_accuracy_matches_gaussian_argmax():
    config = SyntheticDetectorConfig()
    exact = gaussian_argmax_accuracy(config.margin, config.confusion_scale, config.n_labels)

    # independent oracle: raw logit draws, no softmax involved
    rng = np.random.default_rng(99)
    n_oracle = 1_000_000
    z = rng.standard_normal((n_oracle, config.n_labels))
    z[:, 0] += config.margin
    oracle = np.mean(z.argmax(axis=1) == 0)
    assert abs(oracle - exact) < 4 * np.sqrt(exact * (1 - exact) / n_oracle)

    n = 200_000
    batch = synthetic_batch(config, n, 5)
    acc = np.mean(batch.probs.argmax(axis=1) == batch.labels)
    assert abs(acc - exact) < 4 * np.sqrt(exact * (1 - exact) / n)


def test_overconfident_source():
    batch = synthetic_batch(SyntheticDetectorConfig(temperature=0.25), 50_000, 3)
    acc = np.mean(batch.probs.argmax(axis=1) == batch.labels)
    assert batch.probs.max(axis=1).mean() > acc + 0.05


def test_synthetic_calibrated():
    batch = synthetic_batch(SyntheticDetectorConfig(), 10_000, 11)
    assert expected_calibration_error(batch.probs, batch.labels) < 0.03
    assert reliability_slope(batch.probs, batch.labels) == pytest.approx(1.0, abs=0.05)


def test_class_prior_respected():
    prior = (0.5, 0.1, 0.1, 0.1, 0.1, 0.1)
    batch = synthetic_batch(SyntheticDetectorConfig(class_prior=prior), 20_000, 2)
    assert np.mean(batch.labels == 0) == pytest.approx(0.5, abs=0.02)
    with pytest.raises(ConfigError):
        SyntheticDetectorConfig(class_prior=(0.5, 0.5))
    with pytest.raises(ConfigError):
        SyntheticDetectorConfig(temperature=0)


def test_sample_synthetic_deterministic():
    a = sample_synthetic(SyntheticDetectorConfig(), 42).example
    b = sample_synthetic(SyntheticDetectorConfig(), 42).example
    assert a.dist == b.dist and a.true_label == b.true_label


# -- OFDM scenario ---------------------------------------------------------------


def test_ofdm_config_validation():
    with pytest.raises(ConfigError):
        OfdmScenarioConfig(monitored_bins=(3, 3, 5, 7))
    with pytest.raises(ConfigError):
        OfdmScenarioConfig(monitored_bins=(1, 64))
    with pytest.raises(ConfigError):
        OfdmScenarioConfig(num_symbols=0)
    assert OfdmScenarioConfig().monitored_bins == (8, 24, 40, 56)


def test_sir_zero_tone_matches_wifi_power():
    assert OfdmScenarioConfig(sir_db=0).tone_power == 1.0


def test_no_transmission_power_is_noise():
    config = OfdmScenarioConfig(snr_db=10)
    sym = ofdm_symbols(config, np.zeros(400, dtype=int), np.random.default_rng(0))
    power = np.mean(np.abs(sym) ** 2)
    # 400*8*64 samples of exponential power: relative stderr ~ 0.2%
    assert power == pytest.approx(config.noise_power, rel=0.01)


def test_interfered_bin_power_bookkeeping():
    config = OfdmScenarioConfig(snr_db=40, sir_db=-10)
    s = 2
    labels = np.full(2000, LabelSpace(4).interference_label(s).index)
    sym = ofdm_symbols(config, labels, np.random.default_rng(1))
    per_bin = np.mean(np.abs(sym) ** 2, axis=(0, 1))
    hit = config.monitored_bins[s - 1]
    others = np.delete(per_bin, hit).mean()
    assert per_bin[hit] / others == pytest.approx(1 + 10 ** (10 / 10), rel=0.02)


def test_iq_roundtrip_energies():
    config = OfdmScenarioConfig()
    sym = ofdm_symbols(config, np.array([3, 1]), np.random.default_rng(2))
    iq = symbols_to_iq(sym)
    assert iq.shape == (2, config.window_length)
    np.testing.assert_allclose(bin_energies(iq, config), np.mean(np.abs(sym) ** 2, axis=1), rtol=1e-10)


def test_detector_finds_strong_interference():
    config = OfdmScenarioConfig(snr_db=40, sir_db=-20)
    energies = np.ones(config.num_bins) * (1 + config.noise_power)
    energies[config.monitored_bins[2]] += config.tone_power
    probs = bayes_energy_detector(energies, config, energies=True)
    assert int(np.argmax(probs)) == 4


def test_detector_symmetry():
    config = OfdmScenarioConfig()
    energies = np.full(config.num_bins, 1.3)
    probs = bayes_energy_detector(energies, config, energies=True)
    np.testing.assert_allclose(probs[2:], probs[2], rtol=1e-12)


def test_sample_ofdm_carries_iq():
    sample = sample_ofdm(OfdmScenarioConfig(), 5)
    assert sample.iq.shape == (512,)
    np.testing.assert_allclose(
        bayes_energy_detector(sample.iq, OfdmScenarioConfig()), sample.example.dist.probs, rtol=1e-12
    )


def test_matched_gaussian_detector_calibrated():
    config = OfdmScenarioConfig(signal_model="gaussian")
    batch = ofdm_batch(config, 10_000, 17)
    assert expected_calibration_error(batch.probs, batch.labels) < 0.03
    assert reliability_slope(batch.probs, batch.labels) == pytest.approx(1.0, abs=0.05)


def test_noise_mismatch_miscalibrates():
    config = OfdmScenarioConfig(signal_model="gaussian", snr_db=5, assumed_noise_power=0.05)
    batch = ofdm_batch(config, 10_000, 17)
    assert expected_calibration_error(batch.probs, batch.labels) > 0.05


# -- datasets --------------------------------------------------------------------


def test_generate_dataset_balance():
    batch = generate_dataset("synthetic", SyntheticDetectorConfig(), 3000, 0)
    assert len(batch) == 18_000
    assert np.all(np.bincount(batch.labels) == 3000)
    one = generate_dataset("ofdm", OfdmScenarioConfig(), 1, 0)
    assert list(one.labels) == list(range(6))
    with pytest.raises(ConfigError):
        generate_dataset("synthetic", SyntheticDetectorConfig(), 0, 0)


def test_generate_dataset_deterministic_and_order_free():
    a = generate_dataset("synthetic", SyntheticDetectorConfig(), 20, 3)
    b = generate_dataset("synthetic", SyntheticDetectorConfig(), 20, 3)
    np.testing.assert_array_equal(a.probs, b.probs)
    # example i depends only on (seed, i), so rows of class 0 agree across sizes
    small = generate_dataset("synthetic", SyntheticDetectorConfig(), 5, 3)
    np.testing.assert_array_equal(small.probs[:5], a.probs[:5])
    other = generate_dataset("synthetic", SyntheticDetectorConfig(), 20, 4)
    assert not np.array_equal(a.probs, other.probs)


def test_dataset_csv_roundtrip(tmp_path):
    batch = generate_dataset("ofdm", OfdmScenarioConfig(), 4, 9)
    path = tmp_path / "d.csv"
    assert write_dataset_csv(batch, path) == 24
    assert path.read_text().splitlines()[0] == "label_index,p_0,p_1,p_2,p_3,p_4,p_5"
    back = read_dataset_csv(path)
    np.testing.assert_array_equal(back.labels, batch.labels)
    # rows are renormalized on read; floored entries may move by ~1e-23
    np.testing.assert_allclose(back.probs, batch.probs, rtol=1e-13, atol=1e-20)


@pytest.mark.parametrize(
    "text",
    ["", "label,p_0,p_1,p_2\n0,1,0,0\n", "label_index,p_0,p_1,p_2\n", "label_index,p_0,p_1,p_2\n3,1,0,0\n"],
)
def test_dataset_csv_rejects_bad_files(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ConfigError):
        read_dataset_csv(path)
