"""Gas network data model, validation, and canonical JSON serialization.

A network is a directed graph with a positive resistance ``beta`` per arc,
a balance per node (supply positive, demand negative), a global potential
interval applying uniformly to every node, and optional per-node fixed
potentials (Dirichlet pins used by gadget analysis and tests).

All types are immutable after construction and safe to share between
threads.  Node and arc ids are caller-supplied strings and are preserved
verbatim through serialization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from .errors import SchemaError, ValidationError

# A potential assignment maps every node id to a squared-pressure value;
# a flow vector maps every arc id to a signed flow.
PotentialAssignment = Dict[str, float]
FlowVector = Dict[str, float]

BALANCE_SUM_TOL = 1e-9


@dataclass(frozen=True)
class PotentialInterval:
    """Uniform bounds [pi_min, pi_max] on all node potentials."""

    pi_min: float
    pi_max: float

    def __post_init__(self):
        if not (self.pi_min < self.pi_max):
            raise ValidationError(
                "bad_bounds", f"pi_min={self.pi_min} must be < pi_max={self.pi_max}"
            )

    @property
    def width(self) -> float:
        return self.pi_max - self.pi_min


@dataclass(frozen=True)
class Arc:
    """Directed arc with resistance beta > 0 (dimensionless)."""

    id: str
    tail: str
    head: str
    beta: float


@dataclass(frozen=True)
class GasNetwork:
    """Validated directed gas network.

    ``balances`` and ``fixed_potentials`` are stored as plain dicts; they
    must not be mutated after construction.
    """

    nodes: Tuple[str, ...]
    arcs: Tuple[Arc, ...]
    balances: Dict[str, float]
    bounds: PotentialInterval
    fixed_potentials: Dict[str, float] = field(default_factory=dict)

    def node_set(self) -> frozenset:
        return frozenset(self.nodes)

    def arc_ids(self) -> Tuple[str, ...]:
        return tuple(a.id for a in self.arcs)

    def with_balances(self, balances: Mapping[str, float]) -> "GasNetwork":
        """Copy of the network with a replacement balance map (missing ids -> 0)."""
        full = {n: float(balances.get(n, 0.0)) for n in self.nodes}
        return replace(self, balances=full)


def build_network(
    nodes: Iterable[str],
    arcs: Iterable[Tuple[str, str, str, float]],
    balances: Mapping[str, float],
    bounds: PotentialInterval,
    fixed_potentials: Optional[Mapping[str, float]] = None,
) -> GasNetwork:
    """Construct and validate a network.

    ``arcs`` is an iterable of (arc_id, tail, head, beta) tuples.  Validation
    covers: positive beta, no self-loops, unique ids, endpoints present,
    fixed potentials inside the bounds, and zero balance sum within every
    weakly connected component that has no fixed-potential node (pinned
    nodes act as external buffers, so their components may be unbalanced).

    Nodes and arcs are stored sorted by id (canonical order), so two
    networks with the same content compare equal regardless of input order.
    """
    node_tuple = tuple(sorted(str(n) for n in nodes))
    seen = set()
    for n in node_tuple:
        if n in seen:
            raise ValidationError("duplicate_node", n)
        seen.add(n)

    arc_list: List[Arc] = []
    arc_ids = set()
    for aid, tail, head, beta in arcs:
        aid, tail, head = str(aid), str(tail), str(head)
        if aid in arc_ids:
            raise ValidationError("duplicate_arc", aid)
        arc_ids.add(aid)
        if tail not in seen or head not in seen:
            raise ValidationError("unknown_endpoint", f"arc {aid}: {tail}->{head}")
        if tail == head:
            raise ValidationError("self_loop", f"arc {aid} at node {tail}")
        beta = float(beta)
        if not beta > 0.0 or not np.isfinite(beta):
            raise ValidationError("beta_nonpositive", f"arc {aid}: beta={beta}")
        arc_list.append(Arc(aid, tail, head, beta))
    arc_list.sort(key=lambda a: a.id)

    bal = {n: float(balances.get(n, 0.0)) for n in node_tuple}
    for n in balances:
        if n not in seen:
            raise ValidationError("unknown_balance_node", str(n))

    pins: Dict[str, float] = {}
    if fixed_potentials:
        for n, v in fixed_potentials.items():
            if n not in seen:
                raise ValidationError("unknown_pinned_node", str(n))
            v = float(v)
            if not (bounds.pi_min <= v <= bounds.pi_max):
                raise ValidationError(
                    "fixed_potential_out_of_bounds", f"{n}: {v} not in "
                    f"[{bounds.pi_min}, {bounds.pi_max}]"
                )
            pins[str(n)] = v

    net = GasNetwork(node_tuple, tuple(arc_list), bal, bounds, pins)
    for comp in components(net):
        if any(n in pins for n in comp):
            continue
        total = sum(bal[n] for n in comp)
        if abs(total) > BALANCE_SUM_TOL:
            raise ValidationError(
                "unbalanced_component",
                f"component {sorted(comp)[:4]}... sums to {total:.3e}",
            )
    return net


def components(net: GasNetwork) -> List[List[str]]:
    """Weakly connected components, each sorted by node id, in sorted order."""
    adj: Dict[str, List[str]] = {n: [] for n in net.nodes}
    for a in net.arcs:
        adj[a.tail].append(a.head)
        adj[a.head].append(a.tail)
    unseen = set(net.nodes)
    comps = []
    for start in net.nodes:
        if start not in unseen:
            continue
        stack, comp = [start], []
        unseen.discard(start)
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in adj[v]:
                if w in unseen:
                    unseen.discard(w)
                    stack.append(w)
        comps.append(sorted(comp))
    return sorted(comps)


@dataclass(frozen=True)
class ArcArrays:
    """Integer-indexed view of a network for vectorized numerics."""

    node_ids: Tuple[str, ...]
    node_index: Dict[str, int]
    tails: np.ndarray  # int64 (m,)
    heads: np.ndarray  # int64 (m,)
    beta: np.ndarray  # float64 (m,)
    inv_sqrt_beta: np.ndarray  # float64 (m,)


def arc_arrays(net: GasNetwork) -> ArcArrays:
    """Build index arrays in the network's node/arc order."""
    index = {n: i for i, n in enumerate(net.nodes)}
    m = len(net.arcs)
    tails = np.empty(m, dtype=np.int64)
    heads = np.empty(m, dtype=np.int64)
    beta = np.empty(m, dtype=np.float64)
    for i, a in enumerate(net.arcs):
        tails[i] = index[a.tail]
        heads[i] = index[a.head]
        beta[i] = a.beta
    return ArcArrays(net.nodes, index, tails, heads, beta, 1.0 / np.sqrt(beta))


def _require(cond: bool, msg: str):
    if not cond:
        raise SchemaError(msg)


def parse_network(text: str) -> GasNetwork:
    """Parse a network JSON document (see ``serialize_network`` for the schema).

    Raises SchemaError for structural problems and ValidationError for
    violated model invariants; never raises anything else on string input.
    """
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc

    _require(isinstance(doc, dict), "top level must be an object")
    for key in ("bounds", "nodes", "arcs"):
        _require(key in doc, f"missing key {key!r}")
    b = doc["bounds"]
    _require(isinstance(b, dict) and "pi_min" in b and "pi_max" in b,
             "bounds must be an object with pi_min and pi_max")
    _require(isinstance(b["pi_min"], (int, float)) and isinstance(b["pi_max"], (int, float)),
             "bounds values must be numbers")
    bounds = PotentialInterval(float(b["pi_min"]), float(b["pi_max"]))

    _require(isinstance(doc["nodes"], list), "nodes must be a list")
    nodes, balances, pins = [], {}, {}
    for entry in doc["nodes"]:
        _require(isinstance(entry, dict) and "id" in entry, "node entries need an id")
        _require(isinstance(entry["id"], str), "node id must be a string")
        nid = entry["id"]
        bal = entry.get("balance", 0.0)
        _require(isinstance(bal, (int, float)), f"balance of {nid} must be a number")
        nodes.append(nid)
        balances[nid] = float(bal)
        fp = entry.get("fixed_potential")
        if fp is not None:
            _require(isinstance(fp, (int, float)), f"fixed_potential of {nid} must be a number")
            pins[nid] = float(fp)

    _require(isinstance(doc["arcs"], list), "arcs must be a list")
    arcs = []
    for entry in doc["arcs"]:
        _require(isinstance(entry, dict), "arc entries must be objects")
        for key in ("id", "tail", "head", "beta"):
            _require(key in entry, f"arc missing key {key!r}")
        _require(isinstance(entry["id"], str) and isinstance(entry["tail"], str)
                 and isinstance(entry["head"], str), "arc id/tail/head must be strings")
        _require(isinstance(entry["beta"], (int, float)), "arc beta must be a number")
        arcs.append((entry["id"], entry["tail"], entry["head"], float(entry["beta"])))

    return build_network(nodes, arcs, balances, bounds, pins)


def serialize_network(net: GasNetwork) -> str:
    """Canonical JSON: nodes and arcs sorted by id, shortest-roundtrip floats.

    ``parse_network(serialize_network(n)) == n`` holds field-for-field with
    exact float equality.
    """
    doc = {
        "bounds": {"pi_min": net.bounds.pi_min, "pi_max": net.bounds.pi_max},
        "nodes": [
            {
                "id": n,
                "balance": net.balances.get(n, 0.0),
                "fixed_potential": net.fixed_potentials.get(n),
            }
            for n in sorted(net.nodes)
        ],
        "arcs": [
            {"id": a.id, "tail": a.tail, "head": a.head, "beta": a.beta}
            for a in sorted(net.arcs, key=lambda a: a.id)
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)
