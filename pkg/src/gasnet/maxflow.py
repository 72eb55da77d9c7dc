"""Maximum feasible stationary s-t flow by bisection on the flow value.

For a fixed s-t flow value B the potential difference pi_s - pi_t equals
3 z*/B where z* is the optimal resistance cost, and it grows monotonically
with B.  The maximum feasible value is therefore the unique B at which the
potential spread exhausts the interval width pi_max - pi_min, and plain
bisection finds it.  The primary target is the source/sink gap (for s-t
flows the extreme potentials occur at s and t: a strict interior maximum
would be a net source); a fallback bisects on the full potential range in
case an intermediate node escapes the [pi_t, pi_s] window.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

from .errors import NonConvergence, ValidationError, ZeroFlow
from .network import GasNetwork, components
from .stationary import (
    SolverConfig,
    StationarySolution,
    check_feasibility,
    solve_b_flow,
    translate_potentials,
)

logger = logging.getLogger(__name__)

BRACKET_REL_TOL = 1e-9
IDENTITY_REL_TOL = 1e-6


@dataclass(frozen=True)
class MaxFlowResult:
    value: float
    solution: StationarySolution
    gap: float
    bracket_width: float


def _component_of(net: GasNetwork, s: str) -> list:
    for comp in components(net):
        if s in comp:
            return comp
    raise ValidationError("unknown_node", s)


def _solve_st(net: GasNetwork, s: str, t: str, value: float,
              cfg: SolverConfig) -> Tuple[StationarySolution, float]:
    sol = solve_b_flow(net, balance_override={s: value, t: -value}, cfg=cfg)
    gap = sol.potentials[s] - sol.potentials[t]
    if value > 0.0 and gap > 1e-9:
        ident = 3.0 * sol.primal_objective / value
        if abs(ident - gap) > IDENTITY_REL_TOL * gap:
            logger.warning(
                "duality identity violated at B=%.6g: 3z*/B=%.12g vs gap=%.12g",
                value, ident, gap,
            )
    return sol, gap


def st_potential_gap(net: GasNetwork, s: str, t: str, value: float,
                     cfg: Optional[SolverConfig] = None) -> float:
    """Potential difference pi_s - pi_t of the stationary s-t flow of given value."""
    if s == t:
        raise ValidationError("same_terminals", s)
    if value <= 0.0:
        raise ValidationError("nonpositive_value", str(value))
    comp = _component_of(net, s)
    if t not in comp:
        raise ValidationError("terminals_disconnected", f"{s} vs {t}")
    cfg = cfg or SolverConfig()
    _, gap = _solve_st(net, s, t, value, cfg)
    return gap


def _flow_upper_bound(net: GasNetwork, s: str) -> float:
    width = net.bounds.width
    total = 0.0
    for a in net.arcs:
        if a.tail == s or a.head == s:
            total += (width / a.beta) ** 0.5
    return total


def _spread(net: GasNetwork, sol: StationarySolution, comp: list,
            s: str, t: str, full_range: bool) -> float:
    if full_range:
        vals = [sol.potentials[v] for v in comp]
        return max(vals) - min(vals)
    return sol.potentials[s] - sol.potentials[t]


def _bisect(net: GasNetwork, s: str, t: str, cfg: SolverConfig,
            full_range: bool) -> Tuple[float, StationarySolution, float, float]:
    width = net.bounds.width
    comp = _component_of(net, s)
    b_ub = _flow_upper_bound(net, s)
    stop = BRACKET_REL_TOL * max(1.0, b_ub)

    lo = b_ub * 1e-9
    sol_lo, _ = _solve_st(net, s, t, lo, cfg)
    spread_lo = _spread(net, sol_lo, comp, s, t, full_range)
    if spread_lo > width:
        raise ZeroFlow(f"spread {spread_lo} exceeds interval at B={lo}")

    hi = b_ub
    sol_hi, _ = _solve_st(net, s, t, hi, cfg)
    spread_hi = _spread(net, sol_hi, comp, s, t, full_range)
    grow = 0
    while spread_hi < width and grow < 8:  # defensive; pigeonhole makes b_ub enough
        hi *= 2.0
        sol_hi, _ = _solve_st(net, s, t, hi, cfg)
        spread_hi = _spread(net, sol_hi, comp, s, t, full_range)
        grow += 1

    while hi - lo > stop:
        mid = 0.5 * (lo + hi)
        sol_mid, _ = _solve_st(net, s, t, mid, cfg)
        spread_mid = _spread(net, sol_mid, comp, s, t, full_range)
        if spread_mid < spread_lo - 1e-12 or spread_mid > spread_hi + 1e-12:
            raise NonConvergence(spread_mid, 0)  # monotonicity of the bracket broke
        if spread_mid < width:
            lo, sol_lo, spread_lo = mid, sol_mid, spread_mid
        else:
            hi, sol_hi, spread_hi = mid, sol_mid, spread_mid

    return lo, sol_lo, spread_lo, hi - lo


def max_stationary_st_flow(net: GasNetwork, s: str, t: str,
                           cfg: Optional[SolverConfig] = None) -> MaxFlowResult:
    """Largest s-t flow value whose potentials fit the interval.

    The returned solution is translated so the maximum potential of the
    terminal component sits at pi_max (remaining components are centered),
    making the worst feasibility margin zero up to the bracket tolerance.
    """
    if s == t:
        raise ValidationError("same_terminals", s)
    comp = _component_of(net, s)
    if t not in comp:
        raise ValidationError("terminals_disconnected", f"{s} vs {t}")
    cfg = cfg or SolverConfig()

    value, sol, _, bracket = _bisect(net, s, t, cfg, full_range=False)
    adjusted = _center(net, sol, comp)
    ok, _ = check_feasibility(adjusted.potentials, net.bounds, tol=1e-9)
    if not ok:
        value, sol, _, bracket = _bisect(net, s, t, cfg, full_range=True)
        adjusted = _center(net, sol, comp)

    gap = adjusted.potentials[s] - adjusted.potentials[t]
    return MaxFlowResult(value=value, solution=adjusted, gap=gap,
                         bracket_width=bracket)


def _center(net: GasNetwork, sol: StationarySolution, comp: list) -> StationarySolution:
    """Shift the terminal component to touch pi_max; center the others."""
    pi = dict(sol.potentials)
    comp_set = set(comp)
    shift = net.bounds.pi_max - max(pi[v] for v in comp)
    for other in components(net):
        if other[0] in comp_set:
            delta = shift
        else:
            vals = [pi[v] for v in other]
            mid = 0.5 * (max(vals) + min(vals))
            delta = 0.5 * (net.bounds.pi_min + net.bounds.pi_max) - mid
        for v in other:
            pi[v] += delta
    return StationarySolution(
        flow=sol.flow,
        potentials=pi,
        primal_objective=sol.primal_objective,
        dual_objective=sol.dual_objective,
        residual=sol.residual,
        iterations=sol.iterations,
        pinned_supply=sol.pinned_supply,
    )


def result_to_dict(res: MaxFlowResult) -> dict:
    return {
        "value": res.value,
        "gap": res.gap,
        "bracket_width": res.bracket_width,
        "potentials": res.solution.potentials,
        "flows": res.solution.flow,
        "primal": res.solution.primal_objective,
        "dual": res.solution.dual_objective,
        "residual": res.solution.residual,
        "iterations": res.solution.iterations,
    }
