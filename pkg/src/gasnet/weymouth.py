"""Arc-level physics: the flow/potential coupling on a single pipe.

The flow x on an arc (u, v) with resistance beta satisfies

    beta * x * |x| = pi_u - pi_v,

so x = sgn(pi_u - pi_v) * sqrt(|pi_u - pi_v|) / sqrt(beta).  The scalar
kernel sgn(s)*sqrt(|s|) is implemented branchlessly with copysign, which
makes it exactly odd at the bit level.  No smoothing is applied here;
regularization near zero drop is the solver's concern, and verification
code must use the exact law.
"""

from __future__ import annotations

import math
from typing import Dict

import numpy as np

from .errors import DomainError, ValidationError
from .network import FlowVector, GasNetwork, PotentialAssignment, arc_arrays


def signed_sqrt(sigma: float) -> float:
    """sgn(sigma) * sqrt(|sigma|); odd, with signed_sqrt(0) == 0."""
    return math.copysign(math.sqrt(abs(sigma)), sigma)


def signed_sqrt_array(sigma: np.ndarray) -> np.ndarray:
    return np.copysign(np.sqrt(np.abs(sigma)), sigma)


def arc_flow(pi_tail: float, pi_head: float, beta: float) -> float:
    """Flow induced on a single arc by its endpoint potentials."""
    if not beta > 0.0:
        raise DomainError(f"beta must be positive, got {beta}")
    return signed_sqrt(pi_tail - pi_head) / math.sqrt(beta)


def potential_drop(x: float, beta: float) -> float:
    """Potential drop beta * x * |x| caused by flow x; inverse of arc_flow."""
    if not beta > 0.0:
        raise DomainError(f"beta must be positive, got {beta}")
    return beta * x * abs(x)


def _potential_vector(net: GasNetwork, pi: PotentialAssignment) -> np.ndarray:
    if set(pi) != set(net.nodes):
        missing = set(net.nodes) - set(pi)
        extra = set(pi) - set(net.nodes)
        raise ValidationError(
            "potential_nodes_mismatch",
            f"missing={sorted(missing)[:4]} extra={sorted(extra)[:4]}",
        )
    return np.array([float(pi[n]) for n in net.nodes], dtype=np.float64)


def flows_vector(net: GasNetwork, pi: PotentialAssignment) -> np.ndarray:
    """Per-arc induced flows as an array in the network's arc order."""
    arr = arc_arrays(net)
    vec = _potential_vector(net, pi)
    return signed_sqrt_array(vec[arr.tails] - vec[arr.heads]) * arr.inv_sqrt_beta


def induced_flow(net: GasNetwork, pi: PotentialAssignment) -> FlowVector:
    """Flow on every arc, uniquely determined by the node potentials."""
    x = flows_vector(net, pi)
    return {a.id: float(x[i]) for i, a in enumerate(net.arcs)}


def imbalance_vector(net: GasNetwork, pi: PotentialAssignment) -> np.ndarray:
    """Net outflow per node (outgoing minus incoming induced flow)."""
    arr = arc_arrays(net)
    x = flows_vector(net, pi)
    out = np.zeros(len(net.nodes), dtype=np.float64)
    np.add.at(out, arr.tails, x)
    np.subtract.at(out, arr.heads, x)
    return out


def induced_imbalance(net: GasNetwork, pi: PotentialAssignment) -> Dict[str, float]:
    """Net outflow per node; sums to zero over each connected component."""
    out = imbalance_vector(net, pi)
    return {n: float(out[i]) for i, n in enumerate(net.nodes)}
