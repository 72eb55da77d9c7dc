"""Arc physics: the signed-sqrt kernel and induced flows/imbalances."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gasnet.errors import DomainError, ValidationError
from gasnet.gallery import Example3Params, gen_example1, gen_example3
from gasnet.weymouth import (
    arc_flow,
    induced_flow,
    induced_imbalance,
    potential_drop,
    signed_sqrt,
)


def test_signed_sqrt_values():
    assert signed_sqrt(0.0) == 0.0
    assert signed_sqrt(4.0) == 2.0
    assert signed_sqrt(-2.0) == -math.sqrt(2.0)
    assert signed_sqrt(-2.0) == pytest.approx(-1.41421356, abs=1e-8)


@given(st.floats(allow_nan=False, allow_infinity=False, width=64))
@settings(max_examples=300)
def test_signed_sqrt_exactly_odd(sigma):
    assert signed_sqrt(-sigma) == -signed_sqrt(sigma)


def test_arc_flow_examples():
    assert arc_flow(2.0, 1.0, 1.0) == 1.0
    assert arc_flow(0.0, 2.0, 1.0) == -math.sqrt(2.0)
    # decision arc in its on state: stages at head potentials 0 and 4
    beta = (2.0 - 0.4 * math.sqrt(21.0)) ** 2
    total = arc_flow(16.0 / 25.0, 0.0, beta) + arc_flow(16.0 / 25.0, 4.0, beta)
    expected = (0.8 - 0.4 * math.sqrt(21.0)) / math.sqrt(beta)
    assert total == pytest.approx(expected, rel=1e-12)


def test_potential_drop_examples():
    assert potential_drop(1.0, 1.0) == 1.0
    assert potential_drop(-math.sqrt(2.0), 1.0) == pytest.approx(-2.0, rel=1e-15)


def test_beta_must_be_positive():
    with pytest.raises(DomainError):
        arc_flow(1.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        potential_drop(1.0, -1.0)


def test_drop_flow_roundtrip_on_random_pairs():
    # |x| bounded away from 0 so the drop is not lost to cancellation
    # against the head potential offset
    rng = np.random.default_rng(1234)
    for _ in range(1000):
        x = float(rng.uniform(0.05, 10)) * (1 if rng.random() < 0.5 else -1)
        beta = float(rng.uniform(0.05, 20))
        back = arc_flow(potential_drop(x, beta) + 0.7, 0.7, beta)
        assert back == pytest.approx(x, rel=1e-12)


def test_induced_flow_constant_potentials_zero():
    net, _ = gen_example1()
    flows = induced_flow(net, {v: 1.5 for v in net.nodes})
    assert all(f == 0.0 for f in flows.values())


def test_induced_flow_first_stage_pattern():
    net, stages = gen_example1()
    flows = induced_flow(net, stages[0])
    assert flows["s_u"] == 1.0
    assert flows["u_v"] == 1.0
    assert flows["v_t"] == -math.sqrt(2.0)


def test_induced_flow_ladder_all_unit():
    net, stationary, _ = gen_example3(Example3Params(q=5, epsilon=0.2))
    flows = induced_flow(net, stationary)
    for f in flows.values():
        assert f == pytest.approx(1.0, abs=1e-12)


def test_induced_flow_requires_all_nodes():
    net, stages = gen_example1()
    bad = dict(stages[0])
    bad.pop("u")
    with pytest.raises(ValidationError):
        induced_flow(net, bad)


def test_imbalance_constant_potentials_zero():
    net, _ = gen_example1()
    imb = induced_imbalance(net, {v: 2.0 for v in net.nodes})
    assert all(val == 0.0 for val in imb.values())


def test_imbalance_ladder_first_stage_labels():
    # doubled flow stage on the ladder: rungs carry 2, diagonals 2 + delta
    q, eps = 5, 0.04
    params = Example3Params(q=q, epsilon=eps)
    net, _, stage_pis = gen_example3(params)
    delta = 2.0 / math.sqrt(1.0 - eps) - 2.0
    assert delta == 2.0 / math.sqrt(0.96) - 2.0
    imb = induced_imbalance(net, stage_pis[0])
    assert imb["u_0"] == pytest.approx(-2.0, abs=1e-12)
    assert imb[f"v_{q}"] == pytest.approx(2.0, abs=1e-12)
    for i in range(q):
        assert imb[f"v_{i}"] == pytest.approx(4.0 + delta, abs=1e-12)
    for i in range(1, q + 1):
        assert imb[f"u_{i}"] == pytest.approx(-(4.0 + delta), abs=1e-12)


def test_imbalance_conserves_per_component():
    from conftest import random_connected_net

    rng = np.random.default_rng(7)
    for _ in range(40):
        net = random_connected_net(rng)
        pi = {v: float(rng.uniform(0, 4)) for v in net.nodes}
        imb = induced_imbalance(net, pi)
        assert abs(sum(imb.values())) < 1e-10


def _mixed_sign_grid(n=10000, seed=5):
    rng = np.random.default_rng(seed)
    s1 = rng.uniform(-9, 9, size=n)
    s2 = rng.uniform(-9, 9, size=n)
    s2[: n // 3] = -np.abs(s2[: n // 3])  # force plenty of mixed-sign pairs
    s1[: n // 3] = np.abs(s1[: n // 3])
    return s1, s2


def test_averaging_keeps_sign():
    s1, s2 = _mixed_sign_grid()
    f = np.vectorize(signed_sqrt)
    lhs = np.sign(f((s1 + s2) / 2.0))
    rhs = np.sign((f(s1) + f(s2)) / 2.0)
    assert np.array_equal(lhs, rhs)


def test_averaging_never_loses_magnitude():
    s1, s2 = _mixed_sign_grid()
    f = np.vectorize(signed_sqrt)
    lhs = np.abs(f((s1 + s2) / 2.0))
    rhs = np.abs((f(s1) + f(s2)) / 2.0)
    assert np.all(lhs >= rhs - 1e-12)


def test_flow_drop_inverse_property():
    rng = np.random.default_rng(99)
    for _ in range(200):
        pi_b = float(rng.uniform(0, 4))
        x = float(rng.uniform(-3, 3))
        beta = float(rng.uniform(0.1, 5))
        drop = potential_drop(x, beta)
        assert arc_flow(pi_b + drop, pi_b, beta) == pytest.approx(x, rel=1e-12)