import math

import pytest

from sagin_secure.config import ConfigError, ScenarioConfig, db_to_linear, dump_config, load_config


def test_budget_conversion():
    cfg = ScenarioConfig(p_sat_db=10.0, p_uav_db=0.0, p_bs_db=20.0)
    assert cfg.budgets_lin == pytest.approx((10.0, 1.0, 100.0))
    assert db_to_linear(3.0) == pytest.approx(1.9953, rel=1e-4)
    assert ScenarioConfig(noise_power_dbm=-114.0).noise_scale == pytest.approx(10 ** 11.4)


def test_defaults():
    cfg = ScenarioConfig()
    assert (cfg.p_sat_db, cfg.p_uav_db, cfg.p_bs_db, cfg.q_min) == (12.0, 3.0, 20.0, 0.1)
    assert cfg.wavelength_m == pytest.approx(0.1499, rel=1e-3)
    assert cfg.rain_sigma == pytest.approx(math.sqrt(1.6))


def test_yaml_round_trip_and_fingerprint(tmp_path):
    cfg = ScenarioConfig(p_sat_db=4.5, qos_weights=(1, 2, 3))
    dump_config(cfg, tmp_path / "c.yaml")
    back = load_config(tmp_path / "c.yaml")
    assert back == cfg
    assert back.fingerprint() == cfg.fingerprint()
    assert cfg.fingerprint() != ScenarioConfig().fingerprint()
    assert load_config(None) == ScenarioConfig()


def test_invalid_configs(tmp_path):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"p_sat": 1})
    with pytest.raises(ConfigError):
        ScenarioConfig(nakagami_m=0.3)
    with pytest.raises(ConfigError):
        ScenarioConfig(bs_distances_m=(1.0, 2.0, 3.0))
    with pytest.raises(ConfigError):
        ScenarioConfig(beam_gain_form="other")
    with pytest.raises(ConfigError):
        ScenarioConfig(q_min=-0.1)
    with pytest.raises(ConfigError):
        ScenarioConfig(bs_distances_m=(0.0, 1.0, 1.0, 1.0))
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "list.yaml")
