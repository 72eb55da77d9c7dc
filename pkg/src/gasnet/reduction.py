"""Two-stage feasibility gadgets and the exact-cover instance reduction.

Over two stages, a node u supplied through a single arc from a source of
strength 2 with resistance pi_max - p can only meet that supply when both
of its stage potentials equal p; pairing such a source with a matching
sink pins u's potential in any feasible two-stage flow.  A second gadget
(two pinned neighbors at 0 and 4/5 with demands 2 and 2/sqrt(5), unit
arcs) leaves exactly two patterns for its node: both stages at 1 ("off")
or the stages at {0, 4} ("on").  Wiring one decision node per candidate
triple to pinned element nodes with the resistances chosen below makes
the element balances satisfiable exactly when the "on" triples form an
exact cover, which turns exact-cover questions into two-stage balance
feasibility questions.

Everything here emits pure balance instances: pins are realized by
attaching gadget nodes, never by solver-side Dirichlet conditions.
Independent numeric oracles (dense grid plus least-squares polish over
the two stage potentials) cross-check the claimed gadget solution sets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from math import comb
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from .errors import DecodeError, DomainError, SizeLimit, ValidationError
from .network import (
    GasNetwork,
    PotentialAssignment,
    PotentialInterval,
    build_network,
)

# Decision-to-element arc constants.  Switching a decision node from off
# (both stages at 1) to on (stages at {0,4}) changes the total two-stage
# flow on an incoming arc by 2 - (2/5)*sqrt(21) times 1/sqrt(beta) and on
# an outgoing arc by (sqrt(3)-1)/sqrt(beta); the betas below normalize
# both increments to exactly 1.
ON_SHIFT_IN = 2.0 - 0.4 * math.sqrt(21.0)
ON_SHIFT_OUT = math.sqrt(3.0) - 1.0
BETA_IN = ON_SHIFT_IN ** 2
BETA_OUT = ON_SHIFT_OUT ** 2
OFF_PULL = 1.2 / ON_SHIFT_IN  # off-state total backflow on an incoming arc

ELEMENT_IN_PIN = 16.0 / 25.0
ELEMENT_OUT_PIN = 1.0
DECISION_EXTRA = 2.0 + 2.0 / math.sqrt(5.0)
DECISION_BALANCE = 3.0 * OFF_PULL + DECISION_EXTRA

assert ON_SHIFT_IN > 0.0 and BETA_IN > 0.0 and BETA_OUT > 0.0
assert DECISION_BALANCE > 0.0


@dataclass(frozen=True)
class X3CInstance:
    """Ground set of size 3q and a family of 3-element subsets."""

    ground_set: Tuple[str, ...]
    triples: Tuple[Tuple[str, str, str], ...]

    def __post_init__(self):
        if len(self.ground_set) % 3 != 0:
            raise ValidationError("ground_set_size",
                                  f"{len(self.ground_set)} not divisible by 3")
        if len(set(self.ground_set)) != len(self.ground_set):
            raise ValidationError("duplicate_element", "ground set repeats ids")
        elements = set(self.ground_set)
        for triple in self.triples:
            if len(triple) != 3 or len(set(triple)) != 3:
                raise ValidationError("bad_triple", str(triple))
            if not set(triple) <= elements:
                raise ValidationError("triple_outside_ground_set", str(triple))

    @property
    def q(self) -> int:
        return len(self.ground_set) // 3


def make_x3c(elements: Iterable[str], triples: Iterable[Sequence[str]]) -> X3CInstance:
    return X3CInstance(tuple(str(e) for e in elements),
                       tuple(tuple(str(x) for x in t) for t in triples))


@dataclass(frozen=True)
class ReducedInstance:
    network: GasNetwork
    decision_nodes: Dict[int, str]
    element_nodes: Dict[str, Tuple[str, str]]
    target_b: Dict[str, float]
    instance: X3CInstance


def _extend(net: GasNetwork, new_nodes: Dict[str, float],
            new_arcs: List[Tuple[str, str, str, float]],
            balance_shift: Dict[str, float]) -> GasNetwork:
    balances = dict(net.balances)
    for nid, bal in new_nodes.items():
        if nid in balances:
            raise ValidationError("duplicate_node", nid)
        balances[nid] = bal
    for nid, shift in balance_shift.items():
        balances[nid] = balances.get(nid, 0.0) + shift
    nodes = list(net.nodes) + list(new_nodes)
    arcs = [(a.id, a.tail, a.head, a.beta) for a in net.arcs] + new_arcs
    return build_network(nodes, arcs, balances, net.bounds, net.fixed_potentials)


def attach_fixed_potential(net: GasNetwork, u: str, pi_star: float) -> GasNetwork:
    """Attach the source/sink pair forcing u's potential to ``pi_star``.

    Adds nodes ``u_s`` (supply 2) and ``u_t`` (demand 2) with arcs of
    resistance pi_max - pi_star and pi_star - pi_min; balance-neutral at u.
    ``pi_star`` must lie strictly inside the interval.
    """
    if u not in net.node_set():
        raise ValidationError("unknown_node", u)
    lo, hi = net.bounds.pi_min, net.bounds.pi_max
    if not (lo < pi_star < hi):
        raise DomainError(
            f"pinned potential {pi_star} must lie strictly inside ({lo}, {hi})")
    return _extend(
        net,
        new_nodes={f"{u}_s": 2.0, f"{u}_t": -2.0},
        new_arcs=[
            (f"{u}_as", f"{u}_s", u, hi - pi_star),
            (f"{u}_at", u, f"{u}_t", pi_star - lo),
        ],
        balance_shift={},
    )


def _attach_floor_pin(net: GasNetwork, u: str) -> GasNetwork:
    """Supply-side-only pin forcing u's potential to pi_min.

    The lower gadget arc would have zero resistance, so only the source
    side is attached; its 2 units of inflow are absorbed by lowering u's
    own balance by 2.
    """
    lo, hi = net.bounds.pi_min, net.bounds.pi_max
    return _extend(
        net,
        new_nodes={f"{u}_s": 2.0},
        new_arcs=[(f"{u}_as", f"{u}_s", u, hi - lo)],
        balance_shift={u: -2.0},
    )


def attach_binary_decision(net: GasNetwork, u: str) -> GasNetwork:
    """Attach the gadget giving u exactly two feasible two-stage patterns.

    Adds neighbors pinned at 0 and 4/5 with demands 2 and 2/sqrt(5) behind
    unit arcs and adds 2 + 2/sqrt(5) to u's balance; afterwards either
    both stage potentials of u equal 1 or they attain {0, 4}.  Requires
    the interval [0, 4], which the constants assume.
    """
    if u not in net.node_set():
        raise ValidationError("unknown_node", u)
    if abs(net.bounds.pi_min) > 1e-12 or abs(net.bounds.pi_max - 4.0) > 1e-12:
        raise DomainError("binary decision gadget requires the interval [0, 4]")
    v, w = f"{u}_v", f"{u}_w"
    net = _extend(
        net,
        new_nodes={v: -2.0, w: -2.0 / math.sqrt(5.0)},
        new_arcs=[(f"{u}_av", u, v, 1.0), (f"{u}_aw", u, w, 1.0)],
        balance_shift={u: DECISION_EXTRA},
    )
    net = _attach_floor_pin(net, v)
    return attach_fixed_potential(net, w, 4.0 / 5.0)


def reduce_x3c(inst: X3CInstance) -> ReducedInstance:
    """Build the two-stage balance instance encoding an exact-cover question.

    Every element must occur in at least one triple (an uncovered element
    would leave an unbalanced component, which the network model rejects;
    such instances are trivially coverless anyway).
    """
    degree = {x: 0 for x in inst.ground_set}
    for triple in inst.triples:
        for x in triple:
            degree[x] += 1
    uncovered = [x for x, d in degree.items() if d == 0]
    if uncovered:
        raise ValidationError("element_uncovered", str(uncovered[:4]))

    nodes: List[str] = []
    arcs: List[Tuple[str, str, str, float]] = []
    balances: Dict[str, float] = {}
    element_nodes: Dict[str, Tuple[str, str]] = {}
    for x in inst.ground_set:
        ux, vx = f"ux_{x}", f"vx_{x}"
        element_nodes[x] = (ux, vx)
        nodes += [ux, vx]
        balances[ux] = 1.0 - OFF_PULL * degree[x]
        balances[vx] = -1.0

    decision_nodes: Dict[int, str] = {}
    for j, triple in enumerate(inst.triples):
        uc = f"uC_{j}"
        decision_nodes[j] = uc
        nodes.append(uc)
        balances[uc] = 3.0 * OFF_PULL
        for x in triple:
            ux, vx = element_nodes[x]
            arcs.append((f"{ux}__{uc}", ux, uc, BETA_IN))
            arcs.append((f"{uc}__{vx}", uc, vx, BETA_OUT))

    net = build_network(nodes, arcs, balances, PotentialInterval(0.0, 4.0))
    for x in inst.ground_set:
        ux, vx = element_nodes[x]
        net = attach_fixed_potential(net, ux, ELEMENT_IN_PIN)
        net = attach_fixed_potential(net, vx, ELEMENT_OUT_PIN)
    for j in range(len(inst.triples)):
        net = attach_binary_decision(net, decision_nodes[j])

    return ReducedInstance(
        network=net,
        decision_nodes=decision_nodes,
        element_nodes=element_nodes,
        target_b=dict(net.balances),
        instance=inst,
    )


def encode_cover(red: ReducedInstance,
                 cover: Iterable[Sequence[str]]) -> List[PotentialAssignment]:
    """Witness stages for a known exact cover: decision nodes of covering
    triples set on, everything else at its forced value."""
    cover_idx = set()
    triple_index = {tuple(t): j for j, t in enumerate(red.instance.triples)}
    for triple in cover:
        key = tuple(triple)
        if key not in triple_index:
            raise ValidationError("unknown_triple", str(key))
        cover_idx.add(triple_index[key])

    stage1: PotentialAssignment = {}
    stage2: PotentialAssignment = {}

    def put(node: str, p1: float, p2: float):
        stage1[node] = p1
        stage2[node] = p2

    for x in red.instance.ground_set:
        ux, vx = red.element_nodes[x]
        put(ux, ELEMENT_IN_PIN, ELEMENT_IN_PIN)
        put(vx, ELEMENT_OUT_PIN, ELEMENT_OUT_PIN)
        for node in (ux, vx):
            put(f"{node}_s", 4.0, 4.0)
            put(f"{node}_t", 0.0, 0.0)
    for j, uc in red.decision_nodes.items():
        if j in cover_idx:
            put(uc, 0.0, 4.0)
        else:
            put(uc, 1.0, 1.0)
        put(f"{uc}_v", 0.0, 0.0)
        put(f"{uc}_v_s", 4.0, 4.0)
        put(f"{uc}_w", 0.8, 0.8)
        put(f"{uc}_w_s", 4.0, 4.0)
        put(f"{uc}_w_t", 0.0, 0.0)
    return [stage1, stage2]


def decode_cover(red: ReducedInstance,
                 stages: Sequence[PotentialAssignment],
                 state_tol: float = 0.1) -> Optional[List[Tuple[str, ...]]]:
    """Read the on/off states back out of two verified stages.

    A decision node counts as off when both stage potentials are within
    ``state_tol`` of 1 and as on when they are within ``state_tol`` of
    {0, 4}; anything else raises DecodeError.  Returns the on-triples when
    they form an exact cover, None otherwise.
    """
    if len(stages) != 2:
        raise DecodeError(f"expected 2 stages, got {len(stages)}")
    on: List[int] = []
    for j in sorted(red.decision_nodes):
        node = red.decision_nodes[j]
        pair = sorted((stages[0][node], stages[1][node]))
        if abs(pair[0] - 1.0) <= state_tol and abs(pair[1] - 1.0) <= state_tol:
            continue
        if abs(pair[0] - 0.0) <= state_tol and abs(pair[1] - 4.0) <= state_tol:
            on.append(j)
            continue
        raise DecodeError(f"decision node {node} in neither state: {pair}")

    covered: List[str] = []
    for j in on:
        covered.extend(red.instance.triples[j])
    if len(on) != red.instance.q or set(covered) != set(red.instance.ground_set) \
            or len(covered) != len(set(covered)):
        return None
    return [tuple(red.instance.triples[j]) for j in on]


def solve_x3c_bruteforce(inst: X3CInstance,
                         limit: int = 10 ** 6) -> Optional[List[Tuple[str, ...]]]:
    """First exact cover in lexicographic index order, or None."""
    q = inst.q
    if comb(len(inst.triples), q) > limit:
        raise SizeLimit(f"C({len(inst.triples)}, {q}) exceeds {limit}")
    want = set(inst.ground_set)
    for combo in itertools.combinations(range(len(inst.triples)), q):
        covered = set()
        for j in combo:
            covered.update(inst.triples[j])
        if covered == want and len(covered) == 3 * q:
            return [tuple(inst.triples[j]) for j in combo]
    return None


# ---------------------------------------------------------------------------
# independent numeric oracles for the gadget solution sets
# ---------------------------------------------------------------------------

def _sqrt_signed(a: np.ndarray) -> np.ndarray:
    return np.copysign(np.sqrt(np.abs(a)), a)


def _grid_polish(residual, lo: float, hi: float, grid_n: int,
                 feas_tol: float, cluster_radius: float = 0.2):
    """Scan the (p1, p2) grid for near-zero residuals and polish clusters.

    Cluster representatives are polished by Nelder-Mead on the residual
    sum of squares, which is derivative-free (the square-root kinks and
    the tangential symmetric root defeat Newton-type steps).  Returns
    (solutions, candidates): polished roots (deduplicated within 1e-4,
    rejected unless the residual norm drops below 1e-8) and the raw grid
    points whose residual norm is within feas_tol.
    """
    vals = np.linspace(lo, hi, grid_n)
    cand: List[Tuple[float, float, float]] = []
    block = 256
    for start in range(0, grid_n, block):
        p1 = vals[start:start + block][:, None]
        p2 = vals[None, :]
        r = residual(p1, p2)
        norm = np.maximum.reduce([np.abs(c) for c in r])
        ii, jj = np.nonzero(norm <= feas_tol)
        for a, b in zip(ii, jj):
            cand.append((float(norm[a, b]), float(p1[a, 0]), float(vals[b])))

    cand.sort()
    seeds: List[Tuple[float, float]] = []
    for _, p1, p2 in cand:
        if all(max(abs(p1 - a), abs(p2 - b)) > cluster_radius for a, b in seeds):
            seeds.append((p1, p2))

    def sumsq(p):
        parts = residual(np.float64(p[0]), np.float64(p[1]))
        return float(sum(c * c for c in parts))

    solutions: List[Tuple[float, float]] = []
    for seed in seeds:
        fit = minimize(sumsq, np.array(seed), method="Nelder-Mead",
                       options=dict(xatol=1e-15, fatol=1e-30,
                                    maxiter=20000, maxfev=20000))
        if math.sqrt(max(fit.fun, 0.0)) > 1e-8:
            continue
        x = min(max(float(fit.x[0]), lo), hi)
        y = min(max(float(fit.x[1]), lo), hi)
        if all(max(abs(x - a), abs(y - b)) > 1e-4 for a, b in solutions):
            solutions.append((x, y))
    candidates = np.array([(p1, p2) for _, p1, p2 in cand]).reshape(-1, 2)
    return solutions, candidates


def pin_forcing_solutions(pi_star: float, bounds: PotentialInterval,
                          grid_n: int = 4000, feas_tol: float = 1e-3):
    """All (p1, p2) with total gadget-arc flows of 2 on both sides.

    Models the pin gadget with its outer nodes held at the interval ends
    (the flow-maximizing configuration); the unique root is (p*, p*).
    """
    lo, hi = bounds.pi_min, bounds.pi_max
    isb_s = 1.0 / math.sqrt(hi - pi_star)
    isb_t = 1.0 / math.sqrt(pi_star - lo)

    def residual(p1, p2):
        r1 = (_sqrt_signed(hi - p1) + _sqrt_signed(hi - p2)) * isb_s - 2.0
        r2 = (_sqrt_signed(p1 - lo) + _sqrt_signed(p2 - lo)) * isb_t - 2.0
        return np.broadcast_arrays(r1, r2)

    return _grid_polish(residual, lo, hi, grid_n, feas_tol)


def binary_state_solutions(grid_step: float = 1e-3, feas_tol: float = 1e-3):
    """All (p1, p2) in [0,4]^2 meeting both decision-gadget demands;
    the solution set is {(1,1), (0,4), (4,0)}."""
    target_w = 2.0 / math.sqrt(5.0)

    def residual(p1, p2):
        r1 = _sqrt_signed(p1) + _sqrt_signed(p2) - 2.0
        r2 = _sqrt_signed(p1 - 0.8) + _sqrt_signed(p2 - 0.8) - target_w
        return np.broadcast_arrays(r1, r2)

    grid_n = int(round(4.0 / grid_step)) + 1
    return _grid_polish(residual, 0.0, 4.0, grid_n, feas_tol)
