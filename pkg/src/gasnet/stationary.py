"""Stationary gas flow solver.

Computes the flow meeting prescribed node balances by maximizing the
concave dual of the convex resistance-cost problem

    min  sum_a beta_a/3 |x_a|^3   s.t.  net outflow at v equals b_v,

whose dual over node potentials pi is

    max  sum_v b_v pi_v - 2/3 * sum_a |pi_u - pi_v|^(3/2) / sqrt(beta_a).

The dual gradient at node v is b_v minus the net outflow induced by pi,
and the negative dual Hessian is the graph Laplacian with arc weights
1/(2*sqrt(beta_a*|drop_a|)).  We run damped Newton ascent with Armijo
backtracking, clamping |drop| from below by ``regularization_eps`` so the
weight stays finite where the drop vanishes.  Potentials are unique up to
a per-component shift, so one node per component is grounded; nodes with
a fixed potential are treated as Dirichlet conditions whose imbalance is
absorbed as implied external supply and reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NonConvergence, ValidationError
from .network import (
    FlowVector,
    GasNetwork,
    PotentialAssignment,
    PotentialInterval,
    arc_arrays,
    components,
)
from .weymouth import signed_sqrt_array

BALANCE_SUM_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    balance_tol: float = 1e-9
    gap_tol: float = 1e-7
    max_iterations: int = 200
    regularization_eps: float = 1e-12
    ground_node: Optional[str] = None

    def __post_init__(self):
        if min(self.balance_tol, self.gap_tol, self.regularization_eps) <= 0:
            raise ValidationError("bad_config", "tolerances must be positive")


@dataclass(frozen=True)
class StationarySolution:
    """Converged solve: flows, potentials, and both objective values.

    ``pinned_supply`` maps each fixed-potential node to its realized net
    outflow (the external supply implied by holding the pin).
    """

    flow: FlowVector
    potentials: PotentialAssignment
    primal_objective: float
    dual_objective: float
    residual: float
    iterations: int
    pinned_supply: Dict[str, float] = field(default_factory=dict)


def primal_objective(net: GasNetwork, flow: FlowVector) -> float:
    """Resistance cost sum_a beta_a/3 * |x_a|^3."""
    return sum(a.beta / 3.0 * abs(flow[a.id]) ** 3 for a in net.arcs)


def dual_objective(net: GasNetwork, balances: Mapping[str, float],
                   pi: PotentialAssignment) -> float:
    """sum_v b_v pi_v - 2/3 sum_a |drop_a|^(3/2) / sqrt(beta_a).

    Translation-invariant per component whenever the component balances
    sum to zero.
    """
    total = sum(float(balances.get(n, 0.0)) * pi[n] for n in net.nodes)
    for a in net.arcs:
        total -= 2.0 / 3.0 * abs(pi[a.tail] - pi[a.head]) ** 1.5 / math.sqrt(a.beta)
    return total


def translate_potentials(pi: PotentialAssignment, shift: float) -> PotentialAssignment:
    """Add ``shift`` to every node; induced flows are unchanged."""
    return {n: v + shift for n, v in pi.items()}


def check_feasibility(pi: PotentialAssignment, bounds: PotentialInterval,
                      tol: float = 0.0) -> Tuple[bool, float]:
    """Worst bound margin min(pi - pi_min, pi_max - pi); feasible iff >= -tol."""
    worst = math.inf
    for v in pi.values():
        worst = min(worst, v - bounds.pi_min, bounds.pi_max - v)
    return worst >= -tol, worst


def _dual_value(b, pi, tails, heads, isb):
    drops = pi[tails] - pi[heads]
    return float(b @ pi) - 2.0 / 3.0 * float(np.abs(drops) ** 1.5 @ isb)


def solve_b_flow(
    net: GasNetwork,
    balance_override: Optional[Mapping[str, float]] = None,
    cfg: Optional[SolverConfig] = None,
) -> StationarySolution:
    """Solve for the stationary flow meeting the node balances.

    ``balance_override``, when given, replaces the stored balance map
    entirely (missing node ids mean zero).  Components without a fixed
    potential must have balances summing to zero; components with fixed
    potentials may be unbalanced, the surplus being absorbed at the
    pinned nodes.  Deterministic: identical inputs produce bit-identical
    outputs.
    """
    cfg = cfg or SolverConfig()
    if not net.nodes:
        raise ValidationError("empty_network", "no nodes")
    if cfg.ground_node is not None and cfg.ground_node not in net.node_set():
        raise ValidationError("unknown_ground_node", str(cfg.ground_node))

    arr = arc_arrays(net)
    n = len(net.nodes)
    if balance_override is not None:
        for key in balance_override:
            if key not in arr.node_index:
                raise ValidationError("unknown_balance_node", str(key))
        b = np.array([float(balance_override.get(v, 0.0)) for v in net.nodes])
    else:
        b = np.array([float(net.balances.get(v, 0.0)) for v in net.nodes])

    pi = np.zeros(n, dtype=np.float64)
    worst_resid = 0.0
    max_iters = 0

    for comp in components(net):
        idx = np.array([arr.node_index[v] for v in comp], dtype=np.int64)
        local = {g: i for i, g in enumerate(idx)}
        amask = np.isin(arr.tails, idx)
        t_loc = np.array([local[g] for g in arr.tails[amask]], dtype=np.int64)
        h_loc = np.array([local[g] for g in arr.heads[amask]], dtype=np.int64)
        beta_loc = arr.beta[amask]
        isb_loc = arr.inv_sqrt_beta[amask]
        b_loc = b[idx]

        pinned = [v for v in comp if v in net.fixed_potentials]
        if pinned:
            ground_value = net.fixed_potentials[pinned[0]]
            fixed_loc = {local[arr.node_index[v]]: net.fixed_potentials[v]
                         for v in pinned}
        else:
            if abs(float(b_loc.sum())) > BALANCE_SUM_TOL:
                raise ValidationError(
                    "unbalanced_component",
                    f"balances sum to {b_loc.sum():.3e} in component {comp[:4]}",
                )
            ground_value = 0.0
            ground = cfg.ground_node if cfg.ground_node in comp else comp[0]
            fixed_loc = {local[arr.node_index[ground]]: 0.0}

        nn = len(comp)
        pi_loc = np.full(nn, ground_value, dtype=np.float64)
        for i, val in fixed_loc.items():
            pi_loc[i] = val
        free = np.array([i for i in range(nn) if i not in fixed_loc], dtype=np.int64)

        iters = 0
        while True:
            drops = pi_loc[t_loc] - pi_loc[h_loc]
            x = signed_sqrt_array(drops) * isb_loc
            out = np.zeros(nn)
            np.add.at(out, t_loc, x)
            np.subtract.at(out, h_loc, x)
            r = b_loc - out
            resid = float(np.max(np.abs(r[free]))) if free.size else 0.0
            if resid <= cfg.balance_tol:
                break
            if iters >= cfg.max_iterations:
                raise NonConvergence(resid, iters)

            # clamp the drop from below so the weight stays finite at kinks;
            # the floor is beta*x_floor^2 with x_floor tracking the residual
            # (arcs carrying less than a tenth of the residual cannot drive
            # it), bottomed out by regularization_eps.  A drop floor that
            # does not shrink with the residual makes the damped step stall
            # at kink arcs with flow noise ~ sqrt(floor/beta).
            x_floor = max(0.1 * resid, cfg.regularization_eps)
            floor = beta_loc * x_floor * x_floor
            w = 1.0 / (2.0 * np.sqrt(beta_loc * np.maximum(np.abs(drops), floor)))
            pos = np.full(nn, -1, dtype=np.int64)
            pos[free] = np.arange(free.size)
            lap = np.zeros((free.size, free.size))
            for a in range(t_loc.size):
                ti, hi = pos[t_loc[a]], pos[h_loc[a]]
                wa = w[a]
                if ti >= 0:
                    lap[ti, ti] += wa
                if hi >= 0:
                    lap[hi, hi] += wa
                if ti >= 0 and hi >= 0:
                    lap[ti, hi] -= wa
                    lap[hi, ti] -= wa
            dpi = cho_solve(cho_factor(lap), r[free])

            slope = float(r[free] @ dpi)
            phi0 = _dual_value(b_loc, pi_loc, t_loc, h_loc, isb_loc)
            if slope > 64.0 * np.finfo(float).eps * (1.0 + abs(phi0)):
                t = 1.0
                while t > 1e-12:
                    trial = pi_loc.copy()
                    trial[free] += t * dpi
                    if _dual_value(b_loc, trial, t_loc, h_loc, isb_loc) >= \
                            phi0 + 1e-4 * t * slope:
                        break
                    t *= 0.5
            else:
                # predicted gain below the dual's float resolution: Armijo
                # cannot certify anything here.  Use the half step: a full
                # Newton step flips the drop of an exactly-zero-flow arc
                # (the 1-d map is drop -> (1-2t)*drop), while t = 1/2 sends
                # it exactly to zero and still contracts the smooth part.
                t = 0.5
            pi_loc[free] += t * dpi
            iters += 1

        pi[idx] = pi_loc
        worst_resid = max(worst_resid, resid)
        max_iters = max(max_iters, iters)

    drops = pi[arr.tails] - pi[arr.heads]
    x = signed_sqrt_array(drops) * arr.inv_sqrt_beta
    out = np.zeros(n)
    np.add.at(out, arr.tails, x)
    np.subtract.at(out, arr.heads, x)

    potentials = {v: float(pi[arr.node_index[v]]) for v in net.nodes}
    flow = {a.id: float(x[i]) for i, a in enumerate(net.arcs)}
    pinned_supply = {v: float(out[arr.node_index[v]]) for v in net.fixed_potentials
                     if v in net.node_set()}

    b_eff = {v: float(b[arr.node_index[v]]) for v in net.nodes}
    b_eff.update(pinned_supply)
    return StationarySolution(
        flow=flow,
        potentials=potentials,
        primal_objective=primal_objective(net, flow),
        dual_objective=dual_objective(net, b_eff, potentials),
        residual=worst_resid,
        iterations=max_iters,
        pinned_supply=pinned_supply,
    )


def solution_to_dict(sol: StationarySolution) -> dict:
    return {
        "potentials": sol.potentials,
        "flows": sol.flow,
        "primal": sol.primal_objective,
        "dual": sol.dual_objective,
        "residual": sol.residual,
        "iterations": sol.iterations,
    }
