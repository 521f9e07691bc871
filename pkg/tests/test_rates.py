import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sagin_secure.config import ScenarioConfig
from sagin_secure.rates import (
    AccessError, AccessMatrix, N_ACCESS, achievable_rate, check_constraints,
    enumerate_access_matrices, eavesdrop_rate, link_gains, rate_jacobians, secrecy_rate,
    secrecy_rates, sum_secrecy_rate,
)


def loop_rates(aps, p, g):
    """Independent scalar re-implementation with explicit interference loops."""
    main, eve = [], []
    for u in range(3):
        interf = sum(p[v] * g[aps[v]][u] for v in range(3) if v != u)
        main.append(math.log2(1 + p[u] * g[aps[u]][u] / (interf + 1)))
        interf_e = sum(p[v] * g[aps[v]][3] for v in range(3) if v != u)
        eve.append(math.log2(1 + p[u] * g[aps[u]][3] / (interf_e + 1)))
    return main, eve


def gain_matrix(entries):
    """(3, 4) gains from a dict {(ap, rx): value}; everything else 0."""
    g = np.zeros((3, 4))
    for (ap, rx), v in entries.items():
        g[ap, rx] = v
    return g


gains_st = st.lists(st.floats(0.0, 50.0), min_size=12, max_size=12).map(lambda v: np.array(v).reshape(3, 4))
power_st = st.lists(st.floats(0.0, 20.0), min_size=3, max_size=3).map(np.array)
access_st = st.integers(0, N_ACCESS - 1)


# --- access encoding --------------------------------------------------------

def test_enumeration_order_and_ends():
    accs = enumerate_access_matrices()
    assert len(accs) == 27
    assert [a.index for a in accs] == list(range(27))
    assert accs[0].label() == "SSS" and accs[26].label() == "BBB"
    assert len({a.aps for a in accs}) == 27


@given(access_st)
def test_index_matrix_bijection(n):
    a = AccessMatrix.from_index(n)
    x = a.matrix
    assert (x.sum(axis=0) == 1).all()
    assert AccessMatrix.from_matrix(x).index == n
    assert n == 9 * a.aps[0] + 3 * a.aps[1] + a.aps[2]


@pytest.mark.parametrize("bad", [np.zeros((3, 3)), np.ones((3, 3)), np.eye(3)[:2], np.full((3, 3), 2)])
def test_malformed_access_rejected(bad):
    with pytest.raises(AccessError):
        AccessMatrix.from_matrix(bad)
    with pytest.raises(AccessError):
        check_constraints(bad, np.zeros(3), np.ones((3, 4)), ScenarioConfig())


def test_index_out_of_range():
    with pytest.raises(AccessError):
        AccessMatrix.from_index(27)


# --- rates ----------------------------------------------------------------------

def test_achievable_examples():
    g = gain_matrix({(0, 0): 3.0})
    assert achievable_rate("a", 0, [1.0, 0.0, 0.0], g) == pytest.approx(2.0)
    assert achievable_rate("a", 0, [0.0, 0.0, 0.0], g) == 0.0
    # signal 1, interference 1 -> log2(1 + 1/2)
    g = gain_matrix({(0, 0): 1.0, (2, 0): 1.0})
    access = AccessMatrix((0, 2, 2))
    val = achievable_rate("a", access, [1.0, 1.0, 0.0], g)
    assert val == pytest.approx(math.log2(1.5), abs=1e-12)
    assert val == pytest.approx(0.58496, abs=1e-5)


def test_eavesdrop_examples():
    g = gain_matrix({(1, 3): 1.0})
    assert eavesdrop_rate("b", AccessMatrix((0, 1, 0)), [0.0, 1.0, 0.0], g) == pytest.approx(1.0)
    assert eavesdrop_rate("b", AccessMatrix((0, 1, 0)), [0.0, 0.0, 0.0], g) == 0.0
    # signal 2 at Eve (p_b=2), interference 3 from user c on the BS
    g = gain_matrix({(1, 3): 1.0, (2, 3): 1.0})
    val = eavesdrop_rate("b", AccessMatrix((0, 1, 2)), [0.0, 2.0, 3.0], g)
    assert val == pytest.approx(math.log2(1.5), abs=1e-12)


def test_secrecy_examples():
    # main SINR 3, Eve SINR 1 -> 2 - 1
    g = gain_matrix({(0, 0): 3.0, (0, 3): 1.0})
    acc = AccessMatrix((0, 1, 1))
    assert secrecy_rate("a", acc, [1.0, 0, 0], g) == pytest.approx(1.0)
    g = gain_matrix({(0, 0): 1.0, (0, 3): 3.0})
    assert secrecy_rate("a", acc, [1.0, 0, 0], g) == 0.0
    assert secrecy_rate("a", acc, [1.0, 0, 0], g, clamp=False) == pytest.approx(-1.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 50.0), min_size=3, max_size=3), power_st, access_st)
def test_identical_main_and_eve_channels_give_zero(col, p, n):
    g = np.zeros((3, 4))
    for u in range(3):
        # every user sees, from every AP, the same gain as Eve does
        g[:, u] = col
    g[:, 3] = col
    assert sum_secrecy_rate(n, p, g) == 0.0


@settings(max_examples=300, deadline=None)
@given(gains_st, power_st, access_st)
def test_matches_loop_oracle(g, p, n):
    aps = AccessMatrix.from_index(n).aps
    main, eve = loop_rates(aps, p, g)
    expect = sum(max(m - e, 0.0) for m, e in zip(main, eve))
    got = sum_secrecy_rate(n, p, g)
    assert got == pytest.approx(expect, rel=1e-12, abs=1e-12)
    for u in range(3):
        assert achievable_rate(u, n, p, g) == pytest.approx(main[u], rel=1e-12, abs=1e-14)
        assert eavesdrop_rate(u, n, p, g) == pytest.approx(eve[u], rel=1e-12, abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(gains_st, power_st, access_st)
def test_sum_is_sum_of_users_and_nonnegative(g, p, n):
    per_user = [secrecy_rate(u, n, p, g) for u in range(3)]
    assert all(r >= 0 for r in per_user)
    assert sum_secrecy_rate(n, p, g) == pytest.approx(sum(per_user), rel=1e-14, abs=1e-15)
    clamped = secrecy_rates(n, p, g)
    raw = secrecy_rates(n, p, g, clamp=False)
    np.testing.assert_array_equal(clamped[clamped > 0], raw[clamped > 0])


@settings(max_examples=200, deadline=None)
@given(gains_st, power_st, access_st, st.permutations([0, 1, 2]))
def test_user_permutation_symmetry(g, p, n, perm):
    aps = AccessMatrix.from_index(n).aps
    perm = list(perm)
    g2 = g.copy()
    g2[:, :3] = g[:, perm]  # receiver u' = perm[u]
    aps2 = tuple(aps[k] for k in perm)
    p2 = p[perm]
    assert sum_secrecy_rate(AccessMatrix(aps2), p2, g2) == pytest.approx(
        sum_secrecy_rate(n, p, g), rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(gains_st, power_st, access_st)
def test_single_link_reduction(g, p, n):
    aps = AccessMatrix.from_index(n).aps
    for u in range(3):
        q = np.zeros(3)
        q[u] = p[u]
        assert achievable_rate(u, n, q, g) == pytest.approx(math.log2(1 + p[u] * g[aps[u], u]), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(gains_st, power_st, access_st, st.floats(1.0, 1e4))
def test_power_scaling_keeps_rates_finite(g, p, n, c):
    r = check_constraints(n, c * p, g, ScenarioConfig())
    assert np.all(np.isfinite(r.achievable)) and np.all(np.isfinite(r.secrecy))


def test_batch_broadcasting_matches_single():
    rng = np.random.default_rng(0)
    g = rng.exponential(5.0, (10, 3, 4))
    p = rng.uniform(0, 5, (10, 3))
    batch = sum_secrecy_rate(7, p, g)
    single = [sum_secrecy_rate(7, p[k], g[k]) for k in range(10)]
    np.testing.assert_allclose(batch, single, rtol=1e-15)


def test_link_gains_layout():
    g = np.arange(12.0).reshape(3, 4)
    a = link_gains(g, AccessMatrix((2, 0, 1)))
    assert a.shape == (4, 3)
    for r in range(4):
        assert list(a[r]) == [g[2, r], g[0, r], g[1, r]]


@settings(max_examples=200, deadline=None)
@given(gains_st, power_st.map(lambda p: p + 0.1), access_st)
def test_jacobians_against_central_differences(g, p, n):
    _, _, d_main, d_eve = rate_jacobians(n, p, g)
    h = 1e-6
    for v in range(3):
        e = np.zeros(3)
        e[v] = h
        hi = rate_jacobians(n, p + e, g)
        lo = rate_jacobians(n, p - e, g)
        np.testing.assert_allclose(d_main[:, v], (hi[0] - lo[0]) / (2 * h), rtol=1e-5, atol=1e-7)
        np.testing.assert_allclose(d_eve[:, v], (hi[1] - lo[1]) / (2 * h), rtol=1e-5, atol=1e-7)


# --- constraints ----------------------------------------------------------------

def test_check_constraints_examples():
    cfg = ScenarioConfig(q_min=0.1)
    g = np.ones((3, 4))
    r = check_constraints(0, np.zeros(3), g, cfg)
    assert not r.qos_ok.any() and r.budget_ok.all()

    cfg10 = ScenarioConfig(p_sat_db=10.0)  # 10 mW linear
    r = check_constraints(AccessMatrix((0, 0, 0)), [2.0, 3.0, 4.0], g, cfg10)
    assert r.budget_ok[0]
    cfg8 = ScenarioConfig(p_sat_db=10 * math.log10(8.0))
    r = check_constraints(AccessMatrix((0, 0, 0)), [2.0, 3.0, 4.0], g, cfg8)
    assert not r.budget_ok[0] and r.budget_ok[1] and r.budget_ok[2]


@settings(max_examples=100, deadline=None)
@given(gains_st, power_st, access_st)
def test_report_invariants(g, p, n):
    cfg = ScenarioConfig()
    r = check_constraints(n, p, g, cfg)
    assert np.all(r.secrecy >= 0)
    assert r.sum_secrecy == pytest.approx(r.secrecy.sum(), rel=1e-14)
    np.testing.assert_array_equal(r.qos_ok, r.achievable >= cfg.q_min)


def test_negative_power_rejected():
    with pytest.raises(ValueError):
        sum_secrecy_rate(0, [-1.0, 0, 0], np.ones((3, 4)))
