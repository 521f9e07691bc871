"""Channel models for the satellite, UAV and base-station downlinks.

Each ``sample_*`` function returns physical complex coefficients (power gain
``|h|^2`` in linear units). :func:`sample_channel_matrix` assembles the 3x4
matrix for one scenario draw and references it to the receiver noise floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sagin_secure.config import RECEIVER_NAMES

SAT, UAV, BS = 0, 1, 2
RX_INDEX = {name: k for k, name in enumerate(RECEIVER_NAMES)}

# Network input order: S->a,b,c, B->a,b,c, U->a,b,c, S->e, B->e, U->e
FEATURE_ORDER = (
    (SAT, 0), (SAT, 1), (SAT, 2),
    (BS, 0), (BS, 1), (BS, 2),
    (UAV, 0), (UAV, 1), (UAV, 2),
    (SAT, 3), (BS, 3), (UAV, 3),
)
_FEAT_AP = np.array([ap for ap, _ in FEATURE_ORDER])
_FEAT_RX = np.array([rx for _, rx in FEATURE_ORDER])


def _receiver(u):
    return RX_INDEX[u] if isinstance(u, str) else int(u)


# --------------------------------------------------------------------------
# deterministic large-scale factors

def free_space_loss(wavelength, horizontal_distance, altitude):
    """(lambda / 4 pi)^2 / (d^2 + l^2)."""
    if not (math.isfinite(altitude) and altitude > 0):
        raise ValueError(f"altitude must be finite and > 0, got {altitude}")
    if not (math.isfinite(wavelength) and wavelength > 0):
        raise ValueError(f"wavelength must be finite and > 0, got {wavelength}")
    if not (math.isfinite(horizontal_distance) and horizontal_distance >= 0):
        raise ValueError(f"horizontal distance must be finite and >= 0, got {horizontal_distance}")
    return (wavelength / (4.0 * math.pi)) ** 2 / (horizontal_distance ** 2 + altitude ** 2)


def _bessel_series_scaled(order, x, power, terms=40):
    """J_order(x) / x**power from the power series, with x**(order - power) factored out."""
    q = -0.25 * x * x
    term = 1.0 / (2.0 ** order * math.factorial(order))
    total = term
    for k in range(1, terms):
        term *= q / (k * (k + order))
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return total * x ** (order - power)


def _bessel_series(order, x, terms=40):
    return _bessel_series_scaled(order, x, 0, terms)


def _bessel_miller(order, x):
    # Backward recurrence normalized by J0 + 2 * sum J_2k = 1.
    start = 2 * ((max(order, int(x)) + 20 + int(math.sqrt(40.0 * max(order, x)))) // 2)
    two_over_x = 2.0 / x
    j_next, j_cur = 0.0, 1.0
    norm = 0.0
    result = 0.0
    for k in range(start, 0, -1):
        j_prev = k * two_over_x * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        if abs(j_cur) > 1e200:
            j_cur *= 1e-200
            j_next *= 1e-200
            norm *= 1e-200
            result *= 1e-200
        if k - 1 == order:
            result = j_cur
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2.0 * j_cur
    norm += j_cur  # j_cur now holds the unnormalized J0
    return result / norm


def bessel_j(order, x):
    """Bessel function of the first kind for integer order 1 or 3."""
    if order not in (1, 3):
        raise ValueError(f"bessel_j supports orders 1 and 3, got {order}")
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("bessel_j needs a finite argument")
    sign = -1.0 if (x < 0 and order % 2) else 1.0
    ax = abs(x)
    if ax == 0.0:
        return 0.0
    if ax < 1.0:
        return sign * _bessel_series(order, ax)
    return sign * _bessel_miller(order, ax)


def _scaled_j1(u):
    """J1(u) / (2u), with the u -> 0 limit 1/4."""
    if u < 1.0:
        return 0.5 * _bessel_series_scaled(1, u, 1)
    return bessel_j(1, u) / (2.0 * u)


def _scaled_j3(u, power):
    """J3(u) / u**power for power in (2, 3)."""
    if u < 1.0:
        return _bessel_series_scaled(3, u, power)
    return bessel_j(3, u) / u ** power


def beam_gain(gain_linear, elevation_angle, angle_3db, form="corrected"):
    """Satellite spot-beam gain at ``elevation_angle`` off boresight (radians).

    ``corrected`` uses G (J1(u)/2u + 36 J3(u)/u^3)^2, which peaks at G on
    boresight. ``literal`` keeps the -36 J3(u)/u^2 variant (boresight G/16).
    """
    if gain_linear <= 0 or angle_3db <= 0:
        raise ValueError("gain and 3 dB angle must be > 0")
    if not 0 <= elevation_angle < math.pi / 2:
        raise ValueError(f"elevation angle out of range: {elevation_angle}")
    u0 = 2.07123 * math.sin(elevation_angle) / math.sin(angle_3db)
    if form == "corrected":
        shape = _scaled_j1(u0) + 36.0 * _scaled_j3(u0, 3)
    elif form == "literal":
        shape = _scaled_j1(u0) - 36.0 * _scaled_j3(u0, 2)
    else:
        raise ValueError(f"unknown beam gain form {form!r}")
    return gain_linear * shape * shape


def offset_angle(horizontal_distance, altitude):
    return math.atan2(horizontal_distance, altitude)


def satellite_large_scale(config, receiver):
    """C_L * b for one receiver (physical, not noise-normalized)."""
    k = _receiver(receiver)
    d = config.sat_distances_m[k]
    cl = free_space_loss(config.wavelength_m, d, config.sat_altitude_m)
    b = beam_gain(config.sat_max_gain_lin, offset_angle(d, config.sat_altitude_m),
                  config.sat_3db_angle_rad, config.beam_gain_form)
    return cl * b


def a2g_path_gain(config, receiver):
    k = _receiver(receiver)
    return config.uav_ref_gain_lin / (config.uav_distances_m[k] ** 2 + config.uav_altitude_m ** 2)


def ground_path_gain(config, receiver):
    k = _receiver(receiver)
    return config.bs_ref_gain_lin * config.bs_distances_m[k] ** -4


def large_scale_gains(config):
    """(3, 4) physical large-scale power gains, rows S, U, B; columns a, b, c, e."""
    return np.array([
        [satellite_large_scale(config, k) for k in range(4)],
        [a2g_path_gain(config, k) for k in range(4)],
        [ground_path_gain(config, k) for k in range(4)],
    ])


# --------------------------------------------------------------------------
# random draws; all accept ``size`` for vectorized sampling

def sample_rain_attenuation(mu, sigma, rng, size=None):
    """Linear power gain in (0, 1) from ln(beta_dB) ~ N(mu, sigma^2)."""
    if sigma <= 0:
        raise ValueError("rain sigma must be > 0")
    beta_db = np.exp(rng.normal(mu, sigma, size))
    return 10.0 ** (-beta_db / 10.0)


def sample_satellite_channel(config, receiver, rng, size=None):
    large = satellite_large_scale(config, receiver)
    beta = sample_rain_attenuation(config.rain_mu, config.rain_sigma, rng, size)
    theta = rng.uniform(0.0, 2.0 * np.pi, size)
    return np.sqrt(large * beta) * np.exp(-1j * theta)


def rician_small_scale(k_factor, rng, size=None):
    """Unit-power Rician fading; ``k_factor`` linear, ``inf`` gives pure LoS."""
    los = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size))
    ray = (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)
    if math.isinf(k_factor):
        return los + 0.0 * ray
    return np.sqrt(k_factor / (k_factor + 1.0)) * los + np.sqrt(1.0 / (k_factor + 1.0)) * ray


def sample_a2g_channel(config, receiver, rng, size=None):
    return np.sqrt(a2g_path_gain(config, receiver)) * rician_small_scale(config.rician_k_lin, rng, size)


def nakagami_small_scale(m, omega, rng, size=None):
    power = rng.gamma(m, omega / m, size)
    phase = rng.uniform(0.0, 2.0 * np.pi, size)
    return np.sqrt(power) * np.exp(1j * phase)


def sample_ground_channel(config, receiver, rng, size=None):
    small = nakagami_small_scale(config.nakagami_m, config.nakagami_omega, rng, size)
    return np.sqrt(ground_path_gain(config, receiver)) * small


# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelMatrix:
    """Noise-normalized coefficients, shape (..., 3, 4): APs (S, U, B) x receivers (a, b, c, e)."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.shape[-2:] != (3, 4):
            raise ValueError(f"channel matrix must end in shape (3, 4), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("channel coefficients must be finite")
        object.__setattr__(self, "coefficients", c)

    @property
    def gains(self):
        return np.abs(self.coefficients) ** 2

    @property
    def features(self):
        """log10 |h|^2 in network input order, shape (..., 12)."""
        return np.log10(self.gains[..., _FEAT_AP, _FEAT_RX])

    def __len__(self):
        return 1 if self.coefficients.ndim == 2 else self.coefficients.shape[0]

    def __getitem__(self, idx):
        if self.coefficients.ndim == 2:
            raise TypeError("single channel matrix is not indexable")
        return ChannelMatrix(self.coefficients[idx])


def sample_channel_matrix(config, rng):
    """One independent draw per (AP, receiver) pair, referenced to the noise floor."""
    h = np.empty((3, 4), dtype=complex)
    for k in range(4):
        h[SAT, k] = sample_satellite_channel(config, k, rng)
        h[UAV, k] = sample_a2g_channel(config, k, rng)
        h[BS, k] = sample_ground_channel(config, k, rng)
    return ChannelMatrix(h * math.sqrt(config.noise_scale))


def draw_rng(seed, index):
    """Generator for draw ``index`` of stream ``seed``; draws are independent of batch size."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def sample_channels(config, count, seed, start=0):
    """Stack ``count`` draws; draw k is a pure function of (config, seed, start + k)."""
    if count == 0:
        return ChannelMatrix(np.empty((0, 3, 4), dtype=complex))
    return ChannelMatrix(np.stack([
        sample_channel_matrix(config, draw_rng(seed, start + k)).coefficients
        for k in range(count)
    ]))
