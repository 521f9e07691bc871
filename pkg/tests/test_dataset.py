import math

import numpy as np
import pytest

from sagin_secure.channel import large_scale_gains
from sagin_secure.config import ScenarioConfig
from sagin_secure.dataset import Dataset, DatasetError, generate_dataset
from sagin_secure.oracle import brute_force_best

CFG = ScenarioConfig()


def test_empty_dataset_is_a_valid_file(tmp_path):
    ds = generate_dataset(CFG, 0, seed=3)
    ds.save(tmp_path / "e.sagds")
    back = Dataset.load(tmp_path / "e.sagds")
    assert len(back) == 0
    assert back.channels.coefficients.shape == (0, 3, 4)
    assert back.config == CFG


def test_same_inputs_give_identical_bytes(tmp_path):
    generate_dataset(CFG, 50, seed=9).save(tmp_path / "a")
    generate_dataset(CFG, 50, seed=9).save(tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    generate_dataset(CFG, 50, seed=10).save(tmp_path / "c")
    assert (tmp_path / "a").read_bytes() != (tmp_path / "c").read_bytes()


def test_reload_is_bit_exact(tmp_path):
    ds = generate_dataset(CFG.replace(p_sat_db=5.0), 20, seed=1, start=7)
    ds.save(tmp_path / "d")
    back = Dataset.load(tmp_path / "d")
    np.testing.assert_array_equal(back.channels.coefficients, ds.channels.coefficients)
    assert (back.seed, back.start, back.config) == (1, 7, ds.config)


def test_draws_do_not_depend_on_batching():
    whole = generate_dataset(CFG, 10, seed=2).channels.coefficients
    tail = generate_dataset(CFG, 4, seed=2, start=6).channels.coefficients
    np.testing.assert_array_equal(whole[6:], tail)


def test_corrupt_files_rejected(tmp_path):
    blob = generate_dataset(CFG, 2, seed=0).to_bytes()
    with pytest.raises(DatasetError):
        Dataset.from_bytes(b"NOTADSET" + blob[8:])
    # tamper with a config value in the header without updating the fingerprint
    tampered = blob.replace(b'"q_min": 0.1', b'"q_min": 0.2')
    assert tampered != blob
    with pytest.raises(DatasetError):
        Dataset.from_bytes(tampered)
    with pytest.raises(DatasetError):
        generate_dataset(CFG, -1, seed=0)


def test_monte_carlo_magnitudes_match_large_scale_factors():
    ds = generate_dataset(CFG, 10_000, seed=0)
    c = ds.channels.coefficients
    assert c.shape == (10_000, 3, 4) and np.all(np.isfinite(c))
    g = ds.gains / CFG.noise_scale  # back to physical power gains
    large = large_scale_gains(CFG)
    # UAV and BS small-scale fading has unit mean power
    np.testing.assert_allclose(g[:, 1:].mean(axis=0), large[1:], rtol=0.05)
    # satellite: fixed large-scale term times rain loss, whose median is 10^(-e^mu / 10)
    median_rain = 10.0 ** (-math.exp(CFG.rain_mu) / 10.0)
    np.testing.assert_allclose(np.median(g[:, 0], axis=0), large[0] * median_rain, rtol=0.01)
    assert np.all(g[:, 0] <= large[0] * (1 + 1e-12))
    # decade placement of every (AP, receiver) entry follows the closed forms
    assert np.all(np.abs(np.log10(g.mean(axis=0)) - np.log10(large)) < 0.5)
    # under these parameters the UAV links are strongest and the ground links weakest
    assert g[:, 1].mean() > g[:, 0].mean() > g[:, 2].mean()


def test_oracle_accepts_dataset():
    data = generate_dataset(ScenarioConfig(), 6, seed=3)
    a = brute_force_best(data, ScenarioConfig(), 5)
    b = brute_force_best(data.channels, ScenarioConfig(), 5)
    np.testing.assert_array_equal(a.best_objective, b.best_objective)
