"""Shared test helpers: seeded random instances and independent oracles.

The primal-descent oracle solves the resistance-cost flow problem in flow
space (projected gradient on the conservation subspace), sharing no code
path with the dual Newton solver it cross-checks.
"""

from __future__ import annotations

from typing import Dict, Optional, Tuple

import numpy as np

from gasnet.network import GasNetwork, PotentialInterval, arc_arrays, build_network


def random_connected_net(
    rng: np.random.Generator,
    n_nodes: Optional[int] = None,
    extra_arcs: Optional[int] = None,
    beta_range: Tuple[float, float] = (0.5, 2.0),
    bounds: Tuple[float, float] = (0.0, 4.0),
    balanced: bool = True,
) -> GasNetwork:
    """Random weakly connected network (spanning tree plus extra arcs)."""
    n = int(n_nodes if n_nodes is not None else rng.integers(2, 9))
    ids = [f"n{i}" for i in range(n)]
    arcs = []
    for i in range(1, n):
        parent = int(rng.integers(0, i))
        u, v = (ids[parent], ids[i]) if rng.random() < 0.5 else (ids[i], ids[parent])
        beta = float(rng.uniform(*beta_range))
        arcs.append((f"a{len(arcs)}", u, v, beta))
    extra = int(extra_arcs if extra_arcs is not None else rng.integers(0, n))
    for _ in range(extra):
        u, v = rng.choice(n, size=2, replace=False)
        arcs.append((f"a{len(arcs)}", ids[int(u)], ids[int(v)],
                     float(rng.uniform(*beta_range))))
    if balanced and n > 1:
        raw = rng.uniform(-1.0, 1.0, size=n)
        raw -= raw.mean()
        balances = {ids[i]: float(raw[i]) for i in range(n)}
    else:
        balances = {}
    return build_network(ids, arcs, balances, PotentialInterval(*bounds))


def st_terminals(net: GasNetwork) -> Tuple[str, str]:
    return net.nodes[0], net.nodes[-1]


def primal_descent_flows(
    net: GasNetwork,
    balances: Dict[str, float],
    grad_tol: float = 1e-10,
    max_iter: int = 300000,
) -> Dict[str, float]:
    """Minimize sum beta/3 |x|^3 over flows satisfying the balances.

    Projected gradient in flow space: start from the least-squares flow,
    project the cost gradient onto the null space of the incidence matrix,
    step with backtracking.  Independent of node potentials entirely.
    """
    arr = arc_arrays(net)
    n, m = len(net.nodes), len(net.arcs)
    inc = np.zeros((n, m))
    for j in range(m):
        inc[arr.tails[j], j] += 1.0
        inc[arr.heads[j], j] -= 1.0
    b = np.array([float(balances.get(v, 0.0)) for v in net.nodes])

    x, *_ = np.linalg.lstsq(inc, b, rcond=None)
    assert np.max(np.abs(inc @ x - b)) < 1e-9, "balances not realizable"
    null_proj = np.eye(m) - np.linalg.pinv(inc) @ inc

    beta = arr.beta

    def cost(flow):
        return float(beta @ (np.abs(flow) ** 3)) / 3.0

    step = 1.0
    c = cost(x)
    stalls = 0
    for _ in range(max_iter):
        grad = null_proj @ (beta * x * np.abs(x))
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= grad_tol:
            break
        for _bt in range(80):
            cand = x - step * grad
            cc = cost(cand)
            if cc <= c - 1e-4 * step * float(grad @ grad):
                x, c = cand, cc
                step *= 1.3
                stalls = 0
                break
            step *= 0.5
        else:
            step = 1.0
            stalls += 1
            if stalls > 2:
                break
    return {a.id: float(x[i]) for i, a in enumerate(net.arcs)}
