"""Network model, validation, and canonical JSON serialization."""

import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gasnet.errors import SchemaError, ValidationError
from gasnet.gallery import gen_example1, gen_example2
from gasnet.network import (
    PotentialInterval,
    build_network,
    parse_network,
    serialize_network,
)

BOUNDS = PotentialInterval(0.0, 4.0)


def test_single_arc_zero_balance_is_valid():
    net = build_network(["s", "t"], [("a", "s", "t", 1.0)], {}, BOUNDS)
    assert len(net.nodes) == 2 and len(net.arcs) == 1
    assert net.balances == {"s": 0.0, "t": 0.0}


def test_example1_file_matches_generator_bit_for_bit():
    doc = {
        "bounds": {"pi_min": 0.0, "pi_max": 4.0},
        "nodes": [
            {"id": "s", "balance": 2.0 - math.sqrt(2.0), "fixed_potential": None},
            {"id": "u", "balance": 0.0, "fixed_potential": None},
            {"id": "v", "balance": 0.0, "fixed_potential": None},
            {"id": "t", "balance": -(2.0 - math.sqrt(2.0)), "fixed_potential": None},
        ],
        "arcs": [
            {"id": "s_u", "tail": "s", "head": "u", "beta": 1.0},
            {"id": "u_v", "tail": "u", "head": "v", "beta": 1.0},
            {"id": "v_t", "tail": "v", "head": "t", "beta": 1.0},
        ],
    }
    net, _ = gen_example1()
    parsed = parse_network(json.dumps(doc))
    assert parsed == net
    assert serialize_network(parsed) == serialize_network(net)


def test_unbalanced_component_rejected():
    with pytest.raises(ValidationError) as err:
        build_network(["s", "t"], [("a", "s", "t", 1.0)], {"s": 1.0, "t": 0.0}, BOUNDS)
    assert err.value.kind == "unbalanced_component"


def test_roundtrip_examples():
    for net in (gen_example1()[0], gen_example2()):
        assert parse_network(serialize_network(net)) == net


def test_example2_serializes_end_resistance_at_full_precision():
    # shortest-roundtrip decimal of 27 + 18*sqrt(2); parses back exactly
    text = serialize_network(gen_example2())
    printed = repr(27.0 + 18.0 * math.sqrt(2.0))
    assert printed in text
    assert float(printed) == 27.0 + 18.0 * math.sqrt(2.0)


def test_isomorphic_networks_with_different_ids_serialize_differently():
    a = build_network(["x", "y"], [("e", "x", "y", 1.0)], {}, BOUNDS)
    b = build_network(["p", "q"], [("e", "p", "q", 1.0)], {}, BOUNDS)
    assert serialize_network(a) != serialize_network(b)
    assert "x" in serialize_network(a)  # ids preserved verbatim


@pytest.mark.parametrize(
    "arcs,kind",
    [
        ([("a", "s", "t", 0.0)], "beta_nonpositive"),
        ([("a", "s", "t", -2.0)], "beta_nonpositive"),
        ([("a", "s", "s", 1.0)], "self_loop"),
        ([("a", "s", "z", 1.0)], "unknown_endpoint"),
        ([("a", "s", "t", 1.0), ("a", "t", "s", 1.0)], "duplicate_arc"),
    ],
)
def test_arc_validation_errors(arcs, kind):
    with pytest.raises(ValidationError) as err:
        build_network(["s", "t"], arcs, {}, BOUNDS)
    assert err.value.kind == kind


def test_fixed_potential_out_of_bounds():
    with pytest.raises(ValidationError) as err:
        build_network(["s", "t"], [("a", "s", "t", 1.0)], {}, BOUNDS,
                      fixed_potentials={"s": 5.0})
    assert err.value.kind == "fixed_potential_out_of_bounds"


def test_parallel_and_antiparallel_arcs_permitted():
    net = build_network(
        ["s", "t"],
        [("a", "s", "t", 1.0), ("b", "s", "t", 2.0), ("c", "t", "s", 3.0)],
        {}, BOUNDS)
    assert len(net.arcs) == 3


def test_bad_bounds_rejected():
    with pytest.raises(ValidationError):
        PotentialInterval(2.0, 2.0)


def test_networks_are_immutable():
    net, _ = gen_example1()
    with pytest.raises(Exception):
        net.nodes = ()


def test_pinned_component_may_be_unbalanced():
    net = build_network(["s", "t"], [("a", "s", "t", 1.0)], {"s": 1.0, "t": 0.0},
                        BOUNDS, fixed_potentials={"s": 2.0})
    assert net.balances["s"] == 1.0


@st.composite
def small_networks(draw):
    n = draw(st.integers(min_value=1, max_value=5))
    ids = [f"n{i}" for i in range(n)]
    arcs = []
    finite = st.floats(min_value=-8, max_value=8, allow_nan=False)
    m = draw(st.integers(min_value=0, max_value=6))
    for j in range(m):
        t = draw(st.integers(0, n - 1))
        h = draw(st.integers(0, n - 1))
        if t == h:
            continue
        beta = draw(st.floats(min_value=1e-3, max_value=10))
        arcs.append((f"a{j}", ids[t], ids[h], beta))
    # balance one connected pair of nodes when an arc exists, else all zero
    balances = {}
    if arcs:
        t, h = arcs[0][1], arcs[0][2]
        q = draw(finite)
        balances = {t: q, h: -q}
    pins = {}
    if draw(st.booleans()) and arcs:
        pins[arcs[0][1]] = draw(st.floats(min_value=0, max_value=4))
        balances = {}  # avoid unbalanced pin-free components elsewhere
    return build_network(ids, arcs, balances, BOUNDS, pins)


@given(small_networks())
@settings(max_examples=120, deadline=None)
def test_parse_serialize_roundtrip_property(net):
    assert parse_network(serialize_network(net)) == net


@given(st.text(max_size=300))
@settings(max_examples=200, deadline=None)
def test_parse_total_on_arbitrary_text(text):
    try:
        parse_network(text)
    except (SchemaError, ValidationError):
        pass
