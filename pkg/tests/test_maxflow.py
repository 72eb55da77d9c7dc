"""Max stationary s-t flow: bisection correctness and monotonicity."""

import math

import numpy as np
import pytest
from conftest import random_connected_net, st_terminals

from gasnet.gallery import gen_example2, gen_serial
from gasnet.maxflow import _bisect, max_stationary_st_flow, st_potential_gap
from gasnet.network import PotentialInterval, build_network
from gasnet.stationary import SolverConfig, check_feasibility

SQRT2 = math.sqrt(2.0)
B_STAR_HEAVY_PATH = math.sqrt((76.0 - 48.0 * SQRT2) / 219.0)


def single_arc(beta=1.0):
    return build_network(["s", "t"], [("a", "s", "t", beta)], {},
                         PotentialInterval(0.0, 4.0))


def test_gap_single_arc():
    assert st_potential_gap(single_arc(), "s", "t", 2.0) == pytest.approx(4.0, abs=1e-8)


def test_gap_heavy_path_at_max_value():
    gap = st_potential_gap(gen_example2(), "s", "t", B_STAR_HEAVY_PATH)
    assert gap == pytest.approx(4.0, abs=1e-6)


def test_gap_monotone_in_value():
    rng = np.random.default_rng(17)
    for _ in range(10):
        net = random_connected_net(rng, balanced=False)
        if len(net.nodes) < 2:
            continue
        s, t = st_terminals(net)
        b = float(rng.uniform(0.05, 0.5))
        assert st_potential_gap(net, s, t, 2 * b) > st_potential_gap(net, s, t, b)


def test_max_flow_single_arc():
    res = max_stationary_st_flow(single_arc(), "s", "t")
    assert res.value == pytest.approx(2.0, abs=1e-6)
    assert res.gap == pytest.approx(4.0, abs=1e-6)


def test_max_flow_heavy_path_closed_forms():
    res = max_stationary_st_flow(gen_example2(), "s", "t")
    assert res.value == pytest.approx(B_STAR_HEAVY_PATH, abs=1e-6)
    assert res.value == pytest.approx(0.192528, abs=1e-6)
    pi = res.solution.potentials
    assert pi["s"] == pytest.approx(4.0, abs=1e-6)
    assert pi["sp"] == pytest.approx((552.0 - 72.0 * SQRT2) / 219.0, abs=1e-6)
    assert pi["u"] == pytest.approx((476.0 - 24.0 * SQRT2) / 219.0, abs=1e-6)
    assert pi["v"] == pytest.approx((400.0 + 24.0 * SQRT2) / 219.0, abs=1e-6)
    assert pi["tp"] == pytest.approx((324.0 + 72.0 * SQRT2) / 219.0, abs=1e-6)
    assert pi["t"] == pytest.approx(0.0, abs=1e-6)


def test_serial_chain_value_decreases():
    values = []
    for ell in (1, 2, 4, 8):
        net = gen_serial(ell)
        res = max_stationary_st_flow(net, "s", "t")
        # all arcs carry B, so the closed form follows from the total drop
        closed = 2.0 / math.sqrt(54.0 + 36.0 * SQRT2 + 3.0 * ell)
        assert res.value == pytest.approx(closed, abs=1e-6)
        values.append(res.value)
    assert values == sorted(values, reverse=True)
    assert values[-1] < values[0]


def test_identity_and_tightness_at_optimum():
    rng = np.random.default_rng(23)
    for _ in range(8):
        net = random_connected_net(rng, balanced=False)
        if len(net.nodes) < 2:
            continue
        s, t = st_terminals(net)
        res = max_stationary_st_flow(net, s, t)
        z = res.solution.primal_objective
        assert abs(3.0 * z / res.value - res.gap) <= 1e-6 * res.gap
        ok, margin = check_feasibility(res.solution.potentials, net.bounds, tol=1e-6)
        assert ok
        assert abs(margin) <= 1e-6


def test_resistance_increase_never_raises_value():
    rng = np.random.default_rng(29)
    for _ in range(12):
        net = random_connected_net(rng, balanced=False)
        if len(net.nodes) < 2:
            continue
        s, t = st_terminals(net)
        before = max_stationary_st_flow(net, s, t).value
        arcs = [(a.id, a.tail, a.head, a.beta * float(rng.uniform(1.0, 3.0)))
                for a in net.arcs]
        harder = build_network(net.nodes, arcs, net.balances, net.bounds)
        after = max_stationary_st_flow(harder, s, t).value
        assert after <= before + 1e-6


def test_gap_and_full_range_bisection_agree():
    rng = np.random.default_rng(37)
    cfg = SolverConfig()
    for _ in range(8):
        net = random_connected_net(rng, balanced=False)
        if len(net.nodes) < 2:
            continue
        s, t = st_terminals(net)
        v_gap, *_ = _bisect(net, s, t, cfg, full_range=False)
        v_rng, *_ = _bisect(net, s, t, cfg, full_range=True)
        assert v_gap == pytest.approx(v_rng, rel=1e-6, abs=1e-9)