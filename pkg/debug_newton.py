"""Scratch harness: find a non-converging instance and trace the Newton loop."""
import sys

import numpy as np

sys.path.insert(0, "tests")
from conftest import random_connected_net, st_terminals
from scipy.linalg import cho_factor, cho_solve

from gasnet.maxflow import st_potential_gap
from gasnet.network import arc_arrays, components
from gasnet.stationary import SolverConfig, _dual_value
from gasnet.weymouth import signed_sqrt_array


def find_failure(seed=17, count=400):
    rng = np.random.default_rng(seed)
    for i in range(count):
        net = random_connected_net(rng, balanced=False)
        s, t = st_terminals(net)
        b = float(rng.uniform(0.005, 0.9))
        for value in (b, 2 * b):
            try:
                st_potential_gap(net, s, t, value)
            except Exception as exc:
                print(f"instance {i}, B={value}: {exc}")
                return net, s, t, value
    return None


def trace(net, s, t, value, iters=40, verbose_from=0):
    cfg = SolverConfig()
    arr = arc_arrays(net)
    n = len(net.nodes)
    bv = np.zeros(n)
    bv[arr.node_index[s]] = value
    bv[arr.node_index[t]] = -value
    t_loc, h_loc = arr.tails, arr.heads
    beta_loc, isb_loc = arr.beta, arr.inv_sqrt_beta
    pi_loc = np.zeros(n)
    free = np.arange(1, n)
    for it in range(iters):
        drops = pi_loc[t_loc] - pi_loc[h_loc]
        x = signed_sqrt_array(drops) * isb_loc
        out = np.zeros(n)
        np.add.at(out, t_loc, x)
        np.subtract.at(out, h_loc, x)
        r = bv - out
        resid = float(np.max(np.abs(r[free])))
        if resid <= cfg.balance_tol:
            print("converged at iteration", it)
            return
        x_floor = max(0.1 * resid, cfg.regularization_eps)
        floor = beta_loc * x_floor * x_floor
        w = 1.0 / (2.0 * np.sqrt(beta_loc * np.maximum(np.abs(drops), floor)))
        pos = np.full(n, -1, dtype=np.int64)
        pos[free] = np.arange(free.size)
        lap = np.zeros((free.size, free.size))
        for a in range(t_loc.size):
            ti, hi = pos[t_loc[a]], pos[h_loc[a]]
            if ti >= 0:
                lap[ti, ti] += w[a]
            if hi >= 0:
                lap[hi, hi] += w[a]
            if ti >= 0 and hi >= 0:
                lap[ti, hi] -= w[a]
                lap[hi, ti] -= w[a]
        dpi = cho_solve(cho_factor(lap), r[free])
        slope = float(r[free] @ dpi)
        phi0 = _dual_value(bv, pi_loc, t_loc, h_loc, isb_loc)
        halved = 0
        if slope > 64.0 * np.finfo(float).eps * (1.0 + abs(phi0)):
            tt = 1.0
            while tt > 1e-12:
                trial = pi_loc.copy()
                trial[free] += tt * dpi
                if _dual_value(bv, trial, t_loc, h_loc, isb_loc) >= \
                        phi0 + 1e-4 * tt * slope:
                    break
                tt *= 0.5
                halved += 1
        else:
            tt = 0.5
        if it >= verbose_from:
            print(it, "resid %.3e t %.2e halved %d slope %.2e" % (resid, tt, halved, slope))
            print("   r    ", np.array2string(r, precision=2))
            print("   drops", np.array2string(drops, precision=2))
            print("   x    ", np.array2string(x, precision=2))
            print("   dpi  ", np.array2string(dpi, precision=2))
        pi_loc[free] += tt * dpi
    print("still at", resid)


if __name__ == "__main__":
    found = find_failure()
    if found:
        net, s, t, value = found
        print("arcs:", [(a.id, a.tail, a.head, round(a.beta, 3)) for a in net.arcs])
        print("s,t =", s, t)
        trace(net, s, t, value, iters=200, verbose_from=int(sys.argv[1]) if len(sys.argv) > 1 else 6)
