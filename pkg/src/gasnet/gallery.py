"""Generators for the worked instances used across tests and the CLI.

Each generator returns closed-form networks and stage potentials whose
balances are exact (up to float rounding), so they double as ground truth
for the solver and search modules:

* a four-node unit path whose three-stage buffering pattern pushes value
  2 - sqrt(2) between terminals held at equal potential;
* the same path extended by high-resistance end arcs, where the best
  stationary flow value is sqrt((76 - 48*sqrt(2))/219) but a three-stage
  plan still achieves 2 - sqrt(2);
* serial chains of that inner pattern, whose stationary value decays with
  the number of copies while the three-stage value stays put;
* a ladder where meeting the balances with identical stages needs a
  potential range growing like 1 + q*eps, but two buffered stages fit in
  a constant range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

from .errors import ValidationError
from .network import GasNetwork, PotentialAssignment, PotentialInterval, build_network

SQRT2 = math.sqrt(2.0)
END_BETA = 27.0 + 18.0 * SQRT2  # sqrt of it is 3 + 3*sqrt(2), which makes the
# total end-arc flow over the three stages exactly 2 - sqrt(2)
PATH_VALUE = 2.0 - SQRT2


def gen_example1(pin_terminals: bool = False) -> Tuple[GasNetwork, List[PotentialAssignment]]:
    """Unit path s-u-v-t on [0,4] and its three-stage pattern of value 2 - sqrt(2).

    With ``pin_terminals`` the potentials of s and t are fixed to 2, the
    configuration in which the pattern still moves positive value.
    """
    pins = {"s": 2.0, "t": 2.0} if pin_terminals else None
    net = build_network(
        nodes=["s", "u", "v", "t"],
        arcs=[("s_u", "s", "u", 1.0), ("u_v", "u", "v", 1.0), ("v_t", "v", "t", 1.0)],
        balances={"s": PATH_VALUE, "t": -PATH_VALUE},
        bounds=PotentialInterval(0.0, 4.0),
        fixed_potentials=pins,
    )
    stages = [
        {"s": 2.0, "u": 1.0, "v": 0.0, "t": 2.0},
        {"s": 2.0, "u": 1.0, "v": 3.0, "t": 2.0},
        {"s": 2.0, "u": 4.0, "v": 3.0, "t": 2.0},
    ]
    return net, stages


def gen_example2() -> GasNetwork:
    """Six-node path with resistance 27 + 18*sqrt(2) on both end arcs."""
    return build_network(
        nodes=["s", "sp", "u", "v", "tp", "t"],
        arcs=[
            ("s_sp", "s", "sp", END_BETA),
            ("sp_u", "sp", "u", 1.0),
            ("u_v", "u", "v", 1.0),
            ("v_tp", "v", "tp", 1.0),
            ("tp_t", "tp", "t", END_BETA),
        ],
        balances={"s": PATH_VALUE, "t": -PATH_VALUE},
        bounds=PotentialInterval(0.0, 4.0),
    )


def gen_example2_instationary() -> List[PotentialAssignment]:
    """Three stages of value 2 - sqrt(2): terminals at 4 and 0, junctions at 2,
    inner nodes running the buffering pattern of the unit path."""
    _, inner = gen_example1()
    stages = []
    for pi in inner:
        stages.append({
            "s": 4.0, "sp": 2.0, "u": pi["u"], "v": pi["v"], "tp": 2.0, "t": 0.0,
        })
    return stages


def gen_serial(ell: int) -> GasNetwork:
    """Chain of ``ell`` copies of the inner path between the heavy end arcs.

    Copy boundaries are shared junction nodes j_0 .. j_ell; copy i
    contributes nodes u_i, v_i.  ell = 1 is the six-node instance above up
    to renaming.
    """
    if ell < 1:
        raise ValidationError("bad_serial_length", str(ell))
    nodes = ["s", "t"] + [f"j_{i}" for i in range(ell + 1)]
    arcs = [("s_j0", "s", "j_0", END_BETA)]
    for i in range(1, ell + 1):
        nodes += [f"u_{i}", f"v_{i}"]
        arcs += [
            (f"j{i - 1}_u{i}", f"j_{i - 1}", f"u_{i}", 1.0),
            (f"u{i}_v{i}", f"u_{i}", f"v_{i}", 1.0),
            (f"v{i}_j{i}", f"v_{i}", f"j_{i}", 1.0),
        ]
    arcs.append((f"j{ell}_t", f"j_{ell}", "t", END_BETA))
    return build_network(
        nodes=nodes,
        arcs=arcs,
        balances={"s": PATH_VALUE, "t": -PATH_VALUE},
        bounds=PotentialInterval(0.0, 4.0),
    )


def serial_instationary_stages(ell: int) -> List[PotentialAssignment]:
    """Three-stage pattern of value 2 - sqrt(2) on ``gen_serial(ell)``:
    every copy runs the unit-path pattern between junctions held at 2."""
    _, inner = gen_example1()
    stages = []
    for pi in inner:
        stage = {"s": 4.0, "t": 0.0}
        for i in range(ell + 1):
            stage[f"j_{i}"] = 2.0
        for i in range(1, ell + 1):
            stage[f"u_{i}"] = pi["u"]
            stage[f"v_{i}"] = pi["v"]
        stages.append(stage)
    return stages


@dataclass(frozen=True)
class Example3Params:
    """Ladder size q and rung offset eps in (0, 1)."""

    q: int
    epsilon: float

    def __post_init__(self):
        if self.q < 1:
            raise ValidationError("bad_ladder_size", str(self.q))
        if not (0.0 < self.epsilon < 1.0):
            raise ValidationError("bad_epsilon", str(self.epsilon))

    @property
    def delta(self) -> float:
        """Overshoot 2/sqrt(1-eps) - 2 of the doubled diagonal flow."""
        return 2.0 / math.sqrt(1.0 - self.epsilon) - 2.0


def gen_example3(params: Example3Params) -> Tuple[
        GasNetwork, PotentialAssignment, List[PotentialAssignment]]:
    """Ladder with 2q+2 nodes, its stationary half-balance ladder potentials,
    and the two buffered stages meeting the full balance.

    The stationary ladder spans a range of 1 + q*eps; the two-stage plan
    spans max(4, q*(1-eps)*delta^2).  The interval is sized to admit both.
    """
    q, eps = params.q, params.epsilon
    delta = params.delta
    step2 = (1.0 - eps) * delta * delta

    nodes, arcs, balances = [], [], {}
    for i in range(q + 1):
        nodes += [f"u_{i}", f"v_{i}"]
        arcs.append((f"r_{i}", f"v_{i}", f"u_{i}", 1.0))
        if i < q:
            arcs.append((f"d_{i}", f"v_{i}", f"u_{i + 1}", 1.0 - eps))
    balances["u_0"] = -2.0
    for i in range(1, q + 1):
        balances[f"u_{i}"] = -4.0
    for i in range(q):
        balances[f"v_{i}"] = 4.0
    balances[f"v_{q}"] = 2.0

    pi_max = max(4.0, 1.0 + q * eps, q * step2)
    net = build_network(nodes, arcs, balances, PotentialInterval(0.0, pi_max))

    stationary = {}
    for i in range(q + 1):
        stationary[f"u_{i}"] = i * eps
        stationary[f"v_{i}"] = 1.0 + i * eps

    stage1 = {}
    for i in range(q + 1):
        stage1[f"u_{i}"] = 0.0
        stage1[f"v_{i}"] = 4.0
    stage2 = {}
    for i in range(q + 1):
        stage2[f"u_{i}"] = i * step2
        stage2[f"v_{i}"] = i * step2

    return net, stationary, [stage1, stage2]


def potential_range(pis: List[PotentialAssignment]) -> float:
    """Largest single-stage spread of node potentials."""
    return max(max(pi.values()) - min(pi.values()) for pi in pis)
