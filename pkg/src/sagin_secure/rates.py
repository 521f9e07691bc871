"""Achievable, eavesdropping and secrecy rates under shared-spectrum interference.

Every user's transmission interferes at every receiver, whichever AP carries
it. Given an access assignment, ``link_gains`` builds the (..., 4, 3) matrix
``A[r, v] = |h_{ap(v), r}|^2`` (receiver ``r`` in a, b, c, e; transmitting
user ``v``), after which all rates are closed-form in the power vector.
Powers are linear and receiver noise is 1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from sagin_secure.channel import ChannelMatrix
from sagin_secure.config import AP_NAMES, USER_NAMES

LN2 = np.log(2.0)
N_ACCESS = 27
EVE = 3


class AccessError(ValueError):
    pass


@dataclass(frozen=True)
class AccessMatrix:
    """Assignment of users a, b, c to APs; ``aps[u]`` is the AP digit (S=0, U=1, B=2)."""

    aps: tuple

    def __post_init__(self):
        aps = tuple(int(a) for a in self.aps)
        if len(aps) != 3 or any(a not in (0, 1, 2) for a in aps):
            raise AccessError(f"access needs one AP digit in {{0,1,2}} per user, got {self.aps}")
        object.__setattr__(self, "aps", aps)

    @classmethod
    def from_index(cls, n):
        n = int(n)
        if not 0 <= n < N_ACCESS:
            raise AccessError(f"access index out of range: {n}")
        return cls((n // 9, (n // 3) % 3, n % 3))

    @classmethod
    def from_matrix(cls, x):
        x = np.asarray(x)
        if x.shape != (3, 3) or not np.isin(x, (0, 1)).all():
            raise AccessError("access matrix must be a 3x3 binary array")
        if not (x.sum(axis=0) == 1).all():
            raise AccessError("each user column must select exactly one AP")
        return cls(tuple(int(np.argmax(x[:, u])) for u in range(3)))

    @property
    def index(self):
        a, b, c = self.aps
        return 9 * a + 3 * b + c

    @property
    def matrix(self):
        """Binary x[i, u]."""
        x = np.zeros((3, 3), dtype=int)
        x[list(self.aps), [0, 1, 2]] = 1
        return x

    def users_on(self, ap):
        return [u for u, a in enumerate(self.aps) if a == ap]

    def label(self):
        return "".join(AP_NAMES[a] for a in self.aps)

    def __str__(self):
        return ", ".join(f"{u}->{AP_NAMES[a]}" for u, a in zip(USER_NAMES, self.aps))


def enumerate_access_matrices():
    return [AccessMatrix(aps) for aps in itertools.product(range(3), repeat=3)]


def as_access(access):
    return access if isinstance(access, AccessMatrix) else AccessMatrix.from_index(access)


def _gains(ch):
    ch = getattr(ch, "channels", ch)  # datasets wrap a ChannelMatrix
    if isinstance(ch, ChannelMatrix):
        return ch.gains
    return np.asarray(ch, dtype=float)


def link_gains(ch, access):
    """A[..., r, v] = gain from the AP serving user v to receiver r; shape (..., 4, 3)."""
    g = _gains(ch)
    access = as_access(access)
    return np.swapaxes(g[..., list(access.aps), :], -1, -2)


def _check_power(power):
    p = np.asarray(power)
    if not np.issubdtype(p.dtype, np.floating):
        p = p.astype(float)
    if p.shape[-1] != 3:
        raise ValueError(f"power vector must end in length 3, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("powers must be finite and nonnegative")
    return p


def rate_terms(access, power, ch):
    """(main, eve) rates per user, each shaped (..., 3), in bit/s/Hz."""
    p = _check_power(power)
    a = link_gains(ch, access)
    # total received power at each of the 4 receivers
    total = np.einsum("...rv,...v->...r", a, p)
    own = np.diagonal(a[..., :3, :], axis1=-2, axis2=-1) * p
    main = (np.log1p(total[..., :3]) - np.log1p(total[..., :3] - own)) / LN2
    eve_tot = total[..., EVE, None]
    eve = (np.log1p(eve_tot) - np.log1p(eve_tot - a[..., EVE, :] * p)) / LN2
    return main, eve


def _user(u):
    return USER_NAMES.index(u) if isinstance(u, str) else int(u)


def achievable_rate(u, access, power, ch):
    return rate_terms(access, power, ch)[0][..., _user(u)]


def eavesdrop_rate(u, access, power, ch):
    return rate_terms(access, power, ch)[1][..., _user(u)]


def secrecy_rates(access, power, ch, clamp=True):
    main, eve = rate_terms(access, power, ch)
    diff = main - eve
    return np.maximum(diff, 0.0) if clamp else diff


def secrecy_rate(u, access, power, ch, clamp=True):
    return secrecy_rates(access, power, ch, clamp)[..., _user(u)]


def sum_secrecy_rate(access, power, ch, clamp=True):
    return secrecy_rates(access, power, ch, clamp).sum(axis=-1)


def rate_jacobians(access, power, ch):
    """Main and eve rates plus d(rate_u)/d(p_v), each Jacobian shaped (..., 3, 3) [u, v]."""
    p = _check_power(power)
    a = link_gains(ch, access)
    total = np.einsum("...rv,...v->...r", a, p)
    own_gain = np.diagonal(a[..., :3, :], axis1=-2, axis2=-1)
    interf = total[..., :3] - own_gain * p
    main = (np.log1p(total[..., :3]) - np.log1p(interf)) / LN2
    eye = np.eye(3, dtype=bool)
    au = a[..., :3, :]
    d_main = (au / (total[..., :3, None] + 1.0)
              - np.where(eye, 0.0, au) / (interf[..., :, None] + 1.0)) / LN2

    ae = a[..., EVE, :]
    eve_tot = total[..., EVE]
    eve_int = eve_tot[..., None] - ae * p
    eve = (np.log1p(eve_tot)[..., None] - np.log1p(eve_int)) / LN2
    # d/dp_v of log(T_e + 1) - log(T_e - a_u p_u + 1); the second term has no p_u
    d_eve = (ae[..., None, :] / (eve_tot[..., None, None] + 1.0)
             - np.where(eye, 0.0, ae[..., None, :]) / (eve_int[..., :, None] + 1.0)) / LN2
    return main, eve, d_main, d_eve


def ap_loads(access, power):
    """Total power drawn from each AP, shape (..., 3) in digit order S, U, B."""
    p = np.asarray(power)
    p = p if np.issubdtype(p.dtype, np.floating) else p.astype(float)
    x = as_access(access).matrix
    return np.einsum("iu,...u->...i", x, p)


def project_to_budgets(power, access, config):
    """Scale users sharing AP i by min(1, P_i / load_i); the result never exceeds a budget."""
    access = as_access(access)
    p = np.array(power, dtype=float, copy=True)
    shape = p.shape
    p = p.reshape(-1, 3)
    budgets = np.asarray(config.budgets_lin)
    for ap in range(3):
        users = access.users_on(ap)
        if not users:
            continue
        sub = p[:, users]
        load = sub.sum(axis=1)
        over = load > budgets[ap]
        sub[over] *= (budgets[ap] / load[over])[:, None]
        p[:, users] = sub
        # the rescaled sum can land an ulp above the budget; check with the
        # same reduction check_constraints uses
        for _ in range(16):
            bad = ap_loads(access, p)[:, ap] > budgets[ap]
            if not bad.any():
                break
            sub = p[bad][:, users]
            p[np.ix_(np.flatnonzero(bad), users)] = np.nextafter(sub, 0.0)
    return p.reshape(shape)


@dataclass
class RateReport:
    achievable: np.ndarray
    eavesdrop: np.ndarray
    secrecy: np.ndarray
    sum_secrecy: np.ndarray
    qos_ok: np.ndarray
    budget_ok: np.ndarray

    @property
    def feasible(self):
        return self.qos_ok.all(axis=-1) & self.budget_ok.all(axis=-1)


def check_constraints(access, power, ch, config):
    """Evaluate all rates and the QoS / budget constraints for one or many instances."""
    if not isinstance(access, AccessMatrix):
        access = (AccessMatrix.from_matrix(access) if np.ndim(access) == 2
                  else AccessMatrix.from_index(access))
    if not (access.matrix.sum(axis=0) == 1).all():
        raise AccessError("malformed access matrix")
    main, eve = rate_terms(access, power, ch)
    secrecy = np.maximum(main - eve, 0.0)
    loads = ap_loads(access, power)
    return RateReport(
        achievable=main,
        eavesdrop=eve,
        secrecy=secrecy,
        sum_secrecy=secrecy.sum(axis=-1),
        qos_ok=main >= config.q_min,
        budget_ok=loads <= np.asarray(config.budgets_lin),
    )
