"""Scenario configuration for the three-AP / three-user / one-eavesdropper downlink.

Defaults reproduce the simulation parameters of the reference scenario. All
decibel quantities are converted to linear scale by the ``*_lin`` properties;
the rest of the package works in linear units with unit receiver noise.

Configuration files are YAML mappings whose keys are the field names below.
Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import yaml

AP_NAMES = ("S", "U", "B")  # digit order used by the access index
USER_NAMES = ("a", "b", "c")
RECEIVER_NAMES = ("a", "b", "c", "e")
SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    pass


def db_to_linear(x_db):
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    # satellite-to-ground
    carrier_frequency_hz: float = 2.0e9
    sat_altitude_m: float = 600e3
    sat_distances_m: tuple = (2200.0, 2000.0, 2250.0, 2250.0)  # a, b, c, e
    sat_max_gain_db: float = 52.0
    sat_3db_angle_deg: float = 0.4
    rain_mu: float = -3.125
    rain_sigma: float = math.sqrt(1.6)  # N(-3.125, 1.6) read as variance 1.6
    beam_gain_form: str = "corrected"  # or "literal"
    # air-to-ground
    uav_altitude_m: float = 120.0
    uav_distances_m: tuple = (300.0, 260.0, 100.0, 120.0)
    uav_ref_gain_db: float = -40.0
    rician_k_db: float = 10.0
    # ground
    bs_distances_m: tuple = (250.0, 120.0, 250.0, 200.0)
    bs_ref_gain_db: float = -38.46
    nakagami_m: float = 2.0
    nakagami_omega: float = 1.0
    # budgets (dBm) and receiver noise floor (dBm); gains are stored relative
    # to the noise floor so the rate formulas see unit noise
    p_sat_db: float = 12.0
    p_uav_db: float = 3.0
    p_bs_db: float = 20.0
    noise_power_dbm: float = -114.0
    q_min: float = 0.1
    # penalty loss weights
    secrecy_weight: float = 1.0
    qos_weights: tuple = (30.0, 30.0, 30.0)
    budget_weights: tuple = (10.0, 10.0, 10.0)  # S, U, B
    qos_margin: float = 0.02  # training hinge sits at q_min + qos_margin
    negative_secrecy_slope: float = 1.0  # 1: unclamped secrecy in the loss, 0: clamped

    noise_power: float = field(default=1.0, init=False)

    def __post_init__(self):
        for name in ("sat_distances_m", "uav_distances_m", "bs_distances_m",
                     "qos_weights", "budget_weights"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        self.validate()

    def validate(self):
        positive = [self.carrier_frequency_hz, self.sat_altitude_m, self.uav_altitude_m,
                    self.sat_3db_angle_deg, self.rain_sigma, self.nakagami_omega,
                    *self.bs_distances_m]
        if not all(math.isfinite(v) and v > 0 for v in positive):
            raise ConfigError("distances, altitudes, frequency, rain_sigma and omega must be > 0")
        if not all(math.isfinite(v) and v >= 0 for v in (*self.sat_distances_m, *self.uav_distances_m)):
            raise ConfigError("horizontal distances must be finite and >= 0")
        for name in ("sat_distances_m", "uav_distances_m", "bs_distances_m"):
            if len(getattr(self, name)) != 4:
                raise ConfigError(f"{name} needs one entry per receiver a, b, c, e")
        if len(self.qos_weights) != 3 or len(self.budget_weights) != 3:
            raise ConfigError("qos_weights and budget_weights need three entries")
        if self.nakagami_m < 0.5:
            raise ConfigError("nakagami_m must be >= 0.5")
        if self.beam_gain_form not in ("corrected", "literal"):
            raise ConfigError(f"unknown beam_gain_form {self.beam_gain_form!r}")
        if self.q_min < 0:
            raise ConfigError("q_min must be >= 0")

    @cached_property
    def wavelength_m(self):
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    @cached_property
    def sat_max_gain_lin(self):
        return db_to_linear(self.sat_max_gain_db)

    @cached_property
    def sat_3db_angle_rad(self):
        return math.radians(self.sat_3db_angle_deg)

    @cached_property
    def uav_ref_gain_lin(self):
        return db_to_linear(self.uav_ref_gain_db)

    @cached_property
    def bs_ref_gain_lin(self):
        return db_to_linear(self.bs_ref_gain_db)

    @cached_property
    def rician_k_lin(self):
        return db_to_linear(self.rician_k_db)

    @cached_property
    def budgets_lin(self):
        """Per-AP power budgets in AP digit order (S, U, B), in mW."""
        return (db_to_linear(self.p_sat_db), db_to_linear(self.p_uav_db),
                db_to_linear(self.p_bs_db))

    @cached_property
    def noise_scale(self):
        """Factor applied to physical power gains so that receiver noise is 1."""
        return 1.0 / db_to_linear(self.noise_power_dbm)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_budgets(self, *, p_sat_db=None, p_uav_db=None, p_bs_db=None):
        return self.replace(
            p_sat_db=self.p_sat_db if p_sat_db is None else p_sat_db,
            p_uav_db=self.p_uav_db if p_uav_db is None else p_uav_db,
            p_bs_db=self.p_bs_db if p_bs_db is None else p_bs_db,
        )

    def to_dict(self):
        out = {}
        for f in dataclasses.fields(self):
            if not f.init:
                continue
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls) if f.init}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def fingerprint(self):
        """Short stable hash of every parameter, used to tag datasets and results."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path=None):
    if path is None:
        return ScenarioConfig()
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a key/value mapping")
    return ScenarioConfig.from_dict(data)


def dump_config(config, path):
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))
