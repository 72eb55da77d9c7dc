"""Multi-stage gas flows: verification, constructions, and heuristic search.

A k-stage flow is a tuple of stationary flows (one potential assignment
per stage) whose per-stage balances sum to a target balance vector; a
node may buffer or borrow flow between stages.  Feasibility additionally
requires every stage potential to lie in the network's interval.

The search routines parameterize stage potentials directly, so the arc
physics holds by construction and only the accumulated linear balance
constraints are enforced, via a quadratic penalty with weight schedule
1e2, 1e4, 1e6 followed by a pure-feasibility re-polish.  Local steps are
coordinate-wise projected gradient with backtracking (see ``_kernels``).
Search is a lower-bounding heuristic: failure to find a feasible point is
never a certificate of infeasibility.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .errors import (
    NoFeasiblePoint,
    SchemaError,
    SizeLimit,
    ValidationError,
)
from .network import (
    FlowVector,
    GasNetwork,
    PotentialAssignment,
    PotentialInterval,
    arc_arrays,
)
from .stationary import SolverConfig, StationarySolution, solve_b_flow
from .weymouth import flows_vector, induced_flow

STAGE_EQUAL_TOL = 1e-9
BALANCE_SUPPORT_TOL = 1e-12
FEASIBILITY_TOL = 1e-6
GRID_DIM_LIMIT = 12


@dataclass(frozen=True)
class KStageFlow:
    k: int
    stage_potentials: List[PotentialAssignment]
    stage_flows: List[FlowVector]
    stage_balances: List[Dict[str, float]]


@dataclass(frozen=True)
class KStageReport:
    feasible: bool
    max_balance_error: float
    max_bound_violation: float
    st_value: Optional[float]
    is_stationary: bool


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of the multistart penalty search."""

    penalty_weights: Tuple[float, ...] = (1e2, 1e4, 1e6)
    phase_iterations: Tuple[int, ...] = (400, 600, 1000)
    gradient_polish_iterations: int = 2500
    lm_polish_iterations: int = 120
    feasibility_tol: float = FEASIBILITY_TOL
    grad_eps: float = 1e-12
    step_tol: float = 1e-13


def build_kstage(net: GasNetwork, stage_potentials: Sequence[PotentialAssignment]) -> KStageFlow:
    """Derive per-stage flows and balances from stage potentials."""
    if not stage_potentials:
        raise ValidationError("empty_stages", "need k >= 1 stages")
    arr = arc_arrays(net)
    flows, balances = [], []
    for pi in stage_potentials:
        x = flows_vector(net, pi)
        out = np.zeros(len(net.nodes))
        np.add.at(out, arr.tails, x)
        np.subtract.at(out, arr.heads, x)
        flows.append({a.id: float(x[i]) for i, a in enumerate(net.arcs)})
        balances.append({v: float(out[i]) for i, v in enumerate(net.nodes)})
    return KStageFlow(len(stage_potentials), [dict(p) for p in stage_potentials],
                      flows, balances)


def verify_kstage(
    net: GasNetwork,
    stages: Sequence[PotentialAssignment],
    target_b: Optional[Mapping[str, float]] = None,
    bounds: Optional[PotentialInterval] = None,
    tol: float = 1e-9,
) -> KStageReport:
    """Check a k-stage flow against a target balance and the bounds.

    Never raises on a bad flow; the report carries the failures.  The
    target defaults to the network's stored balances, the bounds to the
    network's interval.
    """
    ks = build_kstage(net, stages)
    bounds = bounds or net.bounds
    if target_b is None:
        target_b = net.balances
    for v in target_b:
        if v not in net.node_set():
            raise ValidationError("unknown_balance_node", str(v))

    acc = {v: 0.0 for v in net.nodes}
    for bal in ks.stage_balances:
        for v, val in bal.items():
            acc[v] += val
    max_err = max(abs(acc[v] - float(target_b.get(v, 0.0))) for v in net.nodes)

    viol = 0.0
    for pi in ks.stage_potentials:
        for v in net.nodes:
            viol = max(viol, bounds.pi_min - pi[v], pi[v] - bounds.pi_max)
    viol = max(viol, 0.0)

    support = [(v, float(target_b[v])) for v in sorted(target_b)
               if abs(float(target_b[v])) > BALANCE_SUPPORT_TOL]
    st_value = None
    if len(support) == 2 and abs(support[0][1] + support[1][1]) <= 1e-9:
        st_value = max(support[0][1], support[1][1])

    stationary = True
    first = ks.stage_flows[0]
    for fl in ks.stage_flows[1:]:
        if any(abs(fl[a] - first[a]) > STAGE_EQUAL_TOL for a in first):
            stationary = False
            break

    return KStageReport(
        feasible=(max_err <= tol and viol <= tol),
        max_balance_error=max_err,
        max_bound_violation=viol,
        st_value=st_value,
        is_stationary=stationary,
    )


def stationary_repetition(net: GasNetwork, sol: StationarySolution, k: int) -> KStageFlow:
    """k identical stages of a converged stationary solution."""
    if k < 1:
        raise ValidationError("bad_k", str(k))
    return build_kstage(net, [dict(sol.potentials) for _ in range(k)])


def average_potential_construction(
    net: GasNetwork,
    pi1: PotentialAssignment,
    pi2: PotentialAssignment,
) -> Tuple[FlowVector, FlowVector, Dict[str, float]]:
    """Average-potential flow, half-sum flow, and the resistance rescaling.

    Returns (avg_flow, tilde_flow, rescaled_beta) where avg_flow is induced
    by the averaged potentials, tilde_flow is the arithmetic mean of the two
    stage flows, and rescaled_beta[a] = beta_a * avg^2/tilde^2 (infinity on
    arcs whose tilde flow vanishes).  Per arc, avg and tilde share their
    sign and |avg| >= |tilde|, hence rescaled_beta >= beta.
    """
    x1 = induced_flow(net, pi1)
    x2 = induced_flow(net, pi2)
    pibar = {v: 0.5 * (pi1[v] + pi2[v]) for v in net.nodes}
    xbar = induced_flow(net, pibar)
    tilde = {a: 0.5 * (x1[a] + x2[a]) for a in x1}
    rescaled = {}
    for a in net.arcs:
        if tilde[a.id] != 0.0:
            rescaled[a.id] = a.beta * xbar[a.id] ** 2 / tilde[a.id] ** 2
        else:
            rescaled[a.id] = math.inf
    return xbar, tilde, rescaled


# ---------------------------------------------------------------------------
# search machinery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Layout:
    k: int
    n_free: int
    free_idx: np.ndarray
    base_pi: np.ndarray
    tails: np.ndarray
    heads: np.ndarray
    isb: np.ndarray
    s_idx: int
    cons: np.ndarray
    target: np.ndarray
    lo: float
    hi: float
    node_ids: Tuple[str, ...]


def _layout(net: GasNetwork, k: int, s: Optional[str], t: Optional[str],
            target_b: Optional[Mapping[str, float]]) -> _Layout:
    arr = arc_arrays(net)
    n = len(net.nodes)
    base = np.zeros(n)
    free = []
    for i, v in enumerate(net.nodes):
        if v in net.fixed_potentials:
            base[i] = net.fixed_potentials[v]
        else:
            free.append(i)
    cons = np.ones(n, dtype=np.bool_)
    target = np.zeros(n)
    if s is not None:
        cons[arr.node_index[s]] = False
        cons[arr.node_index[t]] = False
        s_idx = arr.node_index[s]
    else:
        s_idx = -1
        for v, val in (target_b or {}).items():
            if v not in arr.node_index:
                raise ValidationError("unknown_balance_node", str(v))
            target[arr.node_index[v]] = float(val)
    return _Layout(
        k=k, n_free=len(free), free_idx=np.array(free, dtype=np.int64),
        base_pi=base, tails=arr.tails, heads=arr.heads,
        isb=arr.inv_sqrt_beta, s_idx=s_idx, cons=cons, target=target,
        lo=net.bounds.pi_min, hi=net.bounds.pi_max, node_ids=net.nodes,
    )


def _theta_from_stages(lay: _Layout, stages: Sequence[PotentialAssignment]) -> np.ndarray:
    theta = np.empty(lay.k * lay.n_free)
    for i, pi in enumerate(stages):
        for j, g in enumerate(lay.free_idx):
            theta[i * lay.n_free + j] = float(pi[lay.node_ids[g]])
    return np.clip(theta, lay.lo, lay.hi)


def _stages_from_theta(lay: _Layout, theta: np.ndarray) -> List[PotentialAssignment]:
    stages = []
    for i in range(lay.k):
        pi = {v: float(lay.base_pi[j]) for j, v in enumerate(lay.node_ids)}
        for j, g in enumerate(lay.free_idx):
            pi[lay.node_ids[g]] = float(theta[i * lay.n_free + j])
        stages.append(pi)
    return stages


def _metrics(lay: _Layout, theta: np.ndarray) -> Tuple[float, float]:
    """Exact (value, max constrained residual) at a point."""
    acc = _kernels.accumulated_outflow(theta, lay.k, lay.n_free, lay.free_idx,
                                       lay.base_pi, lay.tails, lay.heads, lay.isb)
    resid = 0.0
    if lay.cons.any():
        resid = float(np.max(np.abs(acc - lay.target)[lay.cons]))
    value = float(acc[lay.s_idx]) if lay.s_idx >= 0 else 0.0
    return value, resid


def _polish(lay: _Layout, theta: np.ndarray, value_coef: float,
            cfg: SearchConfig) -> np.ndarray:
    """Penalty-weight ladder, then a pure-feasibility re-polish.

    The ladder trades objective against the quadratic balance penalty;
    the re-polish (gradient descent followed by Levenberg-Marquardt on
    the residual vector) walks the endpoint onto the feasible set, moving
    the potentials only by the order of the remaining violation.
    """
    if lay.n_free == 0:
        return theta
    phases = list(zip(cfg.penalty_weights, cfg.phase_iterations)) if value_coef else []
    for weight, iters in phases:
        theta, _ = _kernels.descend(
            theta, lay.k, lay.n_free, lay.free_idx, lay.base_pi, lay.tails,
            lay.heads, lay.isb, lay.s_idx, lay.cons, lay.target,
            weight, value_coef, cfg.grad_eps, lay.lo, lay.hi, iters, cfg.step_tol)
    theta, _ = _kernels.descend(
        theta, lay.k, lay.n_free, lay.free_idx, lay.base_pi, lay.tails,
        lay.heads, lay.isb, lay.s_idx, lay.cons, lay.target,
        1.0, 0.0, cfg.grad_eps, lay.lo, lay.hi,
        cfg.gradient_polish_iterations, cfg.step_tol)
    theta = _kernels.lm_polish(
        theta, lay.k, lay.n_free, lay.free_idx, lay.base_pi, lay.tails,
        lay.heads, lay.isb, lay.cons, lay.target, cfg.grad_eps,
        lay.lo, lay.hi, cfg.lm_polish_iterations, 1e-12)
    return theta


def _structured_starts(net: GasNetwork, s: str, t: str, k: int) -> List[List[PotentialAssignment]]:
    """Warm starts for instances recognized by their id convention."""
    from . import gallery

    starts: List[List[PotentialAssignment]] = []
    nodes = net.node_set()
    if k == 3:
        if nodes == {"s", "sp", "u", "v", "tp", "t"} and (s, t) == ("s", "t"):
            starts.append(gallery.gen_example2_instationary())
        elif nodes == {"s", "u", "v", "t"} and (s, t) == ("s", "t") \
                and net.fixed_potentials:
            _, stages = gallery.gen_example1()
            starts.append(stages)
        elif "j_0" in nodes and (s, t) == ("s", "t"):
            ell = sum(1 for v in nodes if v.startswith("j_")) - 1
            if ell >= 1 and len(nodes) == 3 * ell + 3:
                starts.append(gallery.serial_instationary_stages(ell))
    # repeating the best stationary s-t flow is always a valid k-stage flow
    try:
        from .maxflow import max_stationary_st_flow

        res = max_stationary_st_flow(net, s, t)
        starts.append([dict(res.solution.potentials) for _ in range(k)])
    except Exception:  # noqa: BLE001 - warm starts must never break the search
        pass
    return starts


def search_kstage_max_st(
    net: GasNetwork,
    s: str,
    t: str,
    k: int,
    budget: int,
    seed: int,
    cfg: Optional[SearchConfig] = None,
    extra_starts: Optional[Sequence[Sequence[PotentialAssignment]]] = None,
) -> Tuple[float, List[PotentialAssignment]]:
    """Best k-stage s-t flow value found by multistart local search.

    Deterministic given (budget, seed); the result is a lower bound on the
    true optimum.  Start order: caller-supplied extra starts, recognized
    structured starts, the constant midpoint, then ``budget`` uniform
    random starts; ties in value resolve to the lowest start index.
    """
    if k < 1 or budget < 1:
        raise ValidationError("bad_search_params", f"k={k} budget={budget}")
    if s == t or s not in net.node_set() or t not in net.node_set():
        raise ValidationError("bad_terminals", f"{s}, {t}")
    cfg = cfg or SearchConfig()
    lay = _layout(net, k, s, t, None)

    starts: List[np.ndarray] = []
    for st in list(extra_starts or []):
        starts.append(_theta_from_stages(lay, st))
    for st in _structured_starts(net, s, t, k):
        starts.append(_theta_from_stages(lay, st))
    mid = 0.5 * (lay.lo + lay.hi)
    starts.append(np.full(lay.k * lay.n_free, mid))
    rng = np.random.default_rng(seed)
    for _ in range(budget):
        starts.append(rng.uniform(lay.lo, lay.hi, size=lay.k * lay.n_free))

    best_value = -math.inf
    best_theta = None
    for theta0 in starts:
        for theta in (theta0, _polish(lay, theta0.copy(), 1.0, cfg)):
            value, resid = _metrics(lay, theta)
            if resid <= cfg.feasibility_tol and value > best_value:
                best_value = value
                best_theta = theta.copy()
    if best_theta is None:
        raise NoFeasiblePoint("no start reached the balance tolerance")
    return best_value, _stages_from_theta(lay, best_theta)


def search_kstage_b_feasible(
    net: GasNetwork,
    target_b: Mapping[str, float],
    k: int,
    budget: int,
    seed: int,
    cfg: Optional[SearchConfig] = None,
    extra_starts: Optional[Sequence[Sequence[PotentialAssignment]]] = None,
) -> Optional[List[PotentialAssignment]]:
    """Search for a feasible k-stage flow meeting ``target_b``.

    Returns stage potentials on success, None otherwise.  Failure is not a
    certificate of infeasibility (the decision problem is hard); the
    caller chooses how much budget to spend.
    """
    if k < 1 or budget < 1:
        raise ValidationError("bad_search_params", f"k={k} budget={budget}")
    cfg = cfg or SearchConfig()
    lay = _layout(net, k, None, None, target_b)

    starts: List[np.ndarray] = []
    for st in list(extra_starts or []):
        starts.append(_theta_from_stages(lay, st))
    try:
        per_stage = {v: float(target_b.get(v, 0.0)) / k for v in net.nodes}
        sol = solve_b_flow(net, balance_override=per_stage, cfg=SolverConfig())
        starts.append(_theta_from_stages(
            lay, [dict(sol.potentials) for _ in range(k)]))
    except Exception:  # noqa: BLE001 - warm start only
        pass
    mid = 0.5 * (lay.lo + lay.hi)
    starts.append(np.full(lay.k * lay.n_free, mid))
    rng = np.random.default_rng(seed)
    for _ in range(budget):
        starts.append(rng.uniform(lay.lo, lay.hi, size=lay.k * lay.n_free))

    for theta0 in starts:
        _, resid0 = _metrics(lay, theta0)
        if resid0 <= cfg.feasibility_tol:
            return _stages_from_theta(lay, theta0)
        theta = _polish(lay, theta0.copy(), 0.0, cfg)
        _, resid = _metrics(lay, theta)
        if resid <= cfg.feasibility_tol:
            return _stages_from_theta(lay, theta)
    return None


def grid_oracle_kstage(
    net: GasNetwork,
    s: str,
    t: str,
    k: int,
    grid_step: float,
    balance_tol: float = FEASIBILITY_TOL,
    return_stages: bool = False,
):
    """Exhaustive grid enumeration of stage potentials on tiny instances.

    Potentials of every non-pinned node range over the regular grid of
    spacing ``grid_step`` spanning the interval; the best accumulated
    outflow at ``s`` among grid points meeting every non-terminal balance
    within ``balance_tol`` is returned.  Validates search results from
    below.  Limited to 12 grid dimensions (SizeLimit otherwise).
    """
    width = net.bounds.width
    steps = width / grid_step
    if abs(steps - round(steps)) > 1e-9:
        raise ValidationError("grid_step_mismatch",
                              f"{grid_step} does not divide {width}")
    g = int(round(steps)) + 1
    lay = _layout(net, k, s, t, None)
    dims = lay.k * lay.n_free
    if dims > GRID_DIM_LIMIT:
        raise SizeLimit(f"{dims} grid dimensions exceed {GRID_DIM_LIMIT}")
    if g ** dims > _kernels.GRID_COMBO_CAP:
        raise SizeLimit(f"{g}^{dims} grid points exceed {_kernels.GRID_COMBO_CAP}")
    grid_vals = lay.lo + grid_step * np.arange(g, dtype=np.float64)

    if dims == 0:
        theta = np.empty(0)
        value, resid = _metrics(lay, theta)
        best = value if resid <= balance_tol else -math.inf
        return (best, _stages_from_theta(lay, theta)) if return_stages else best

    best_val, best_code = _kernels.grid_search(
        grid_vals, lay.k, lay.n_free, lay.free_idx, lay.base_pi, lay.tails,
        lay.heads, lay.isb, lay.s_idx, lay.cons, lay.target, balance_tol)
    if not return_stages:
        return float(best_val)
    if best_code < 0:
        return float(best_val), None
    digits = np.array(np.unravel_index(int(best_code), (g,) * dims))
    theta = grid_vals[digits]
    return float(best_val), _stages_from_theta(lay, theta)


# ---------------------------------------------------------------------------
# stage file format
# ---------------------------------------------------------------------------

def stages_to_dict(stages: Sequence[PotentialAssignment],
                   target_b: Optional[Mapping[str, float]] = None) -> dict:
    doc = {"k": len(stages), "stages": [dict(pi) for pi in stages]}
    if target_b is not None:
        doc["target_b"] = dict(target_b)
    return doc


def parse_stages(text: str) -> Tuple[List[PotentialAssignment], Optional[Dict[str, float]]]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "stages" not in doc:
        raise SchemaError("stage document needs a 'stages' list")
    stages = doc["stages"]
    if not isinstance(stages, list) or not stages:
        raise SchemaError("'stages' must be a non-empty list")
    out = []
    for entry in stages:
        if not isinstance(entry, dict):
            raise SchemaError("each stage must be an object of node potentials")
        out.append({str(nid): float(val) for nid, val in entry.items()})
    if "k" in doc and doc["k"] != len(out):
        raise SchemaError("k does not match the number of stages")
    target = doc.get("target_b")
    if target is not None:
        if not isinstance(target, dict):
            raise SchemaError("target_b must be an object")
        target = {str(nid): float(val) for nid, val in target.items()}
    return out, target
