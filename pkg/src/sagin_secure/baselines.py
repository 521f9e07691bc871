"""Reference schemes: fixed power splits and uniformly random access."""

from __future__ import annotations

import numpy as np

from sagin_secure.rates import N_ACCESS, AccessMatrix, as_access, project_to_budgets, _gains


def baseline_equal_power(access, config):
    """Each AP splits its budget equally among the users attached to it."""
    access = as_access(access)
    budgets = config.budgets_lin
    p = np.zeros(3)
    for ap in range(3):
        users = access.users_on(ap)
        if users:
            p[users] = budgets[ap] / len(users)
    return project_to_budgets(p, access, config)


def baseline_fractional_power(access, ch, config):
    """Within each AP, power proportional to each attached user's own channel gain."""
    access = as_access(access)
    g = _gains(ch)
    budgets = config.budgets_lin
    p = np.zeros(g.shape[:-2] + (3,))
    for ap in range(3):
        users = access.users_on(ap)
        if not users:
            continue
        own = g[..., ap, users]
        p[..., users] = budgets[ap] * own / own.sum(axis=-1, keepdims=True)
    return project_to_budgets(p, access, config)


def baseline_random_access(rng, size=None):
    """Uniform draw over the 27 assignments (an AccessMatrix, or an index array if ``size``)."""
    if size is None:
        return AccessMatrix.from_index(rng.integers(N_ACCESS))
    return rng.integers(N_ACCESS, size=size)
