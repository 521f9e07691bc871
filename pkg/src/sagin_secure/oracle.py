"""Exhaustive reference solver: all 27 access assignments times a power grid.

Each user's power runs over ``{0, P/(g-1), ..., P}`` where ``P`` is the budget
of its AP. When several users share an AP, grid triples whose total exceeds
the budget are dropped (checked on integer grid indices, so kept points never
exceed a budget). Among the remaining points the solver returns the best
clamped sum secrecy rate that meets ``q_min`` for every user; if no point
meets it, the maximizer of the penalized objective is returned instead and
flagged infeasible.

The solver is vectorized over a batch of channel draws and sweeps the grid
one slab (fixed first-user power) at a time, evaluating the rates on the
outer grid of the other two users' powers, so memory stays at ``g**2``
points per instance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sagin_secure.rates import (EVE, LN2, N_ACCESS, as_access, enumerate_access_matrices,
                                link_gains, rate_terms, _gains)

DEFAULT_GRID = 33


@dataclass
class OracleSolution:
    best_access: np.ndarray     # (N,) access index
    best_power: np.ndarray      # (N, 3)
    best_objective: np.ndarray  # (N,) clamped sum secrecy at best_power
    per_access_objectives: np.ndarray  # (N, 27)
    per_access_power: np.ndarray       # (N, 27, 3)
    per_access_feasible: np.ndarray    # (N, 27)
    feasible: np.ndarray        # (N,)


def _budget_mask(ka, g, aps):
    """(g, g) mask over (k_b, k_c) of grid points within every shared budget, for fixed k_a."""
    kb, kc = np.meshgrid(np.arange(g), np.arange(g), indexing="ij")
    k = (np.full(kb.shape, ka), kb, kc)
    ok = np.ones(kb.shape, dtype=bool)
    for ap in set(aps):
        users = [u for u in range(3) if aps[u] == ap]
        if len(users) > 1:
            ok &= sum(k[u] for u in users) <= g - 1
    return ok


def _slab_scores(a, pa, levels_b, levels_c, config):
    """Objective, Q_min flag and penalized score over one (k_b, k_c) slab.

    ``a`` is the (n, 4, 3) link-gain array; results have shape (n, g, g).
    The rate expressions mirror :func:`rate_terms` evaluated on the outer
    grid of user b and user c powers.
    """
    rx_a = a[:, :, 0] * pa                         # (n, 4)
    rx_b = a[:, :, 1, None] * levels_b             # (n, 4, g)
    rx_c = a[:, :, 2, None] * levels_c
    total = rx_a[..., None, None] + rx_b[..., :, None] + rx_c[..., None, :]   # (n, 4, g, g)
    shape = total.shape[:1] + total.shape[2:]
    own = (np.broadcast_to(rx_a[:, 0, None, None], shape), np.broadcast_to(rx_b[:, 1, :, None], shape),
           np.broadcast_to(rx_c[:, 2, None, :], shape))
    at_eve = (rx_a[:, 3, None, None], rx_b[:, 3, :, None], rx_c[:, 3, None, :])
    log_eve = np.log1p(total[:, EVE])
    qos_w = config.qos_weights
    obj = np.zeros(shape)
    pen = np.zeros(shape)
    ok = np.ones(shape, dtype=bool)
    for u in range(3):
        main = (np.log1p(total[:, u]) - np.log1p(total[:, u] - own[u])) / LN2
        eve = (log_eve - np.log1p(total[:, EVE] - at_eve[u])) / LN2
        diff = main - eve
        short = np.maximum(config.q_min - main, 0.0)
        obj += np.maximum(diff, 0.0)
        pen += config.secrecy_weight * diff - qos_w[u] * short
        ok &= short == 0.0
    return obj, ok, pen


def grid_power_search(access, ch, config, grid_points_per_axis=DEFAULT_GRID, max_batch_points=1_000_000):
    """Best grid power per instance for one access assignment.

    Returns ``(power, objective, feasible)`` with shapes (N, 3), (N,), (N,)
    for a batch, or scalars / (3,) for a single channel matrix.
    """
    g = int(grid_points_per_axis)
    if g < 2:
        raise ValueError("grid needs at least 2 points per axis")
    access = as_access(access)
    gains = _gains(ch)
    single = gains.ndim == 2
    gains = gains.reshape(-1, 3, 4)
    n = gains.shape[0]
    budgets = np.asarray(config.budgets_lin)[list(access.aps)]
    step = budgets / (g - 1)
    links = link_gains(gains, access)
    levels = np.arange(g)[:, None] * step          # (g, 3)
    kb, kc = np.meshgrid(np.arange(g), np.arange(g), indexing="ij")
    kb, kc = kb.ravel(), kc.ravel()

    best_feas = np.full(n, -np.inf)
    best_feas_k = np.full((n, 3), -1)
    best_pen = np.full(n, -np.inf)
    best_pen_k = np.zeros((n, 3), dtype=int)

    chunk = max(1, max_batch_points // (g * g))
    for ka in range(g):
        mask = _budget_mask(ka, g, access.aps).ravel()
        if not mask.any():
            continue
        for lo in range(0, n, chunk):
            sl = slice(lo, lo + chunk)
            obj, ok, pen = _slab_scores(links[sl], levels[ka, 0], levels[:, 1], levels[:, 2], config)
            m = obj.shape[0]
            obj, ok, pen = obj.reshape(m, -1), ok.reshape(m, -1), pen.reshape(m, -1)
            rows = np.arange(m)

            masked = np.where(ok & mask, obj, -np.inf)
            j = np.argmax(masked, axis=1)
            val = masked[rows, j]
            better = val > best_feas[sl]
            best_feas[sl][better] = val[better]
            best_feas_k[sl][better] = np.stack([np.full(better.sum(), ka), kb[j[better]], kc[j[better]]], -1)

            masked = np.where(mask, pen, -np.inf)
            j = np.argmax(masked, axis=1)
            val = masked[rows, j]
            better = val > best_pen[sl]
            best_pen[sl][better] = val[better]
            best_pen_k[sl][better] = np.stack([np.full(better.sum(), ka), kb[j[better]], kc[j[better]]], -1)

    feasible = np.isfinite(best_feas)
    k = np.where(feasible[:, None], best_feas_k, best_pen_k)
    power = k * step
    objective = np.maximum(np.subtract(*rate_terms(access, power, gains)), 0.0).sum(-1)
    if single:
        return power[0], float(objective[0]), bool(feasible[0])
    return power, objective, feasible


def brute_force_best(ch, config, grid_points_per_axis=DEFAULT_GRID):
    """Grid search under every access assignment; batch in, batched solution out.

    Feasible assignments always beat infeasible ones; among equals the
    highest clamped sum secrecy wins, ties to the lowest index.
    """
    gains = _gains(ch).reshape(-1, 3, 4)
    n = gains.shape[0]
    objectives = np.zeros((n, N_ACCESS))
    powers = np.zeros((n, N_ACCESS, 3))
    feas = np.zeros((n, N_ACCESS), dtype=bool)
    for access in enumerate_access_matrices():
        p, obj, ok = grid_power_search(access, gains, config, grid_points_per_axis)
        objectives[:, access.index] = obj
        powers[:, access.index] = p
        feas[:, access.index] = ok
    any_feas = feas.any(axis=1)
    ranked = np.where(feas | ~any_feas[:, None], objectives, -np.inf)
    best = np.argmax(ranked, axis=1)
    rows = np.arange(n)
    return OracleSolution(
        best_access=best,
        best_power=powers[rows, best],
        best_objective=objectives[rows, best],
        per_access_objectives=objectives,
        per_access_power=powers,
        per_access_feasible=feas,
        feasible=any_feas,
    )
