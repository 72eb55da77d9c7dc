"""Hot numeric kernels for the multi-stage search and the grid oracle.

Two interchangeable backends are provided:

* loop kernels compiled with numba ``@njit`` (the default), and
* a pure-numpy vectorized fallback.

Setting the environment variable ``GASNET_NO_NUMBA=1`` before import
forces the numpy path; the numpy path is also chosen automatically when
numba cannot be imported.  Both backends run the same algorithm with the
same constants, so results agree to floating-point noise; within one
backend results are bit-reproducible.  ``benchmarks/bench_kernels.py``
times the two paths against each other.

The objective minimized by ``descend`` over stage potentials theta
(k stages * n_free free nodes, box-constrained) is

    F(theta) = -value_coef * acc[s] + weight * sum_cons (acc[v] - target[v])^2

where acc[v] is the accumulated (all stages summed) net outflow at node v
induced by the Weymouth law.  ``value_coef=0`` gives the pure feasibility
objective used by the b-flow search and by the final feasibility polish.
"""

from __future__ import annotations

import math
import os

import numpy as np

ARMIJO_SIGMA = 1e-4
STEP_GROW = 1.3
STEP_SHRINK = 0.5
STEP_MAX = 1e8
STEP_MIN = 1e-18
MAX_BACKTRACKS = 60

_flag = os.environ.get("GASNET_NO_NUMBA", "").strip().lower()
NUMBA_REQUESTED = _flag not in ("1", "true", "yes", "on")

GRID_COMBO_CAP = 300_000_000


# ---------------------------------------------------------------------------
# loop-style kernels (numba-compiled when available)
# ---------------------------------------------------------------------------

def _build_stage_loops(pis, theta, k, nf, free_idx, base_pi):
    n = base_pi.shape[0]
    for i in range(k):
        for v in range(n):
            pis[i, v] = base_pi[v]
        for j in range(nf):
            pis[i, free_idx[j]] = theta[i * nf + j]


def _acc_loops(pis, k, tails, heads, isb, acc):
    m = tails.shape[0]
    for v in range(acc.shape[0]):
        acc[v] = 0.0
    for i in range(k):
        for a in range(m):
            d = pis[i, tails[a]] - pis[i, heads[a]]
            x = math.copysign(math.sqrt(abs(d)), d) * isb[a]
            acc[tails[a]] += x
            acc[heads[a]] -= x


def _eval_f_loops(theta, k, nf, free_idx, base_pi, tails, heads, isb,
                  s_idx, cons, target, weight, value_coef):
    n = base_pi.shape[0]
    pis = np.empty((k, n), dtype=np.float64)
    acc = np.empty(n, dtype=np.float64)
    _build_stage_loops(pis, theta, k, nf, free_idx, base_pi)
    _acc_loops(pis, k, tails, heads, isb, acc)
    f = 0.0
    if s_idx >= 0:
        f -= value_coef * acc[s_idx]
    for v in range(n):
        if cons[v]:
            r = acc[v] - target[v]
            f += weight * r * r
    return f


def _eval_fg_loops(theta, k, nf, free_idx, base_pi, tails, heads, isb,
                   s_idx, cons, target, weight, value_coef, grad_eps):
    n = base_pi.shape[0]
    m = tails.shape[0]
    pis = np.empty((k, n), dtype=np.float64)
    acc = np.empty(n, dtype=np.float64)
    _build_stage_loops(pis, theta, k, nf, free_idx, base_pi)
    _acc_loops(pis, k, tails, heads, isb, acc)

    f = 0.0
    coef = np.zeros(n, dtype=np.float64)
    if s_idx >= 0:
        f -= value_coef * acc[s_idx]
        coef[s_idx] -= value_coef
    for v in range(n):
        if cons[v]:
            r = acc[v] - target[v]
            f += weight * r * r
            coef[v] += 2.0 * weight * r

    gnode = np.zeros((k, n), dtype=np.float64)
    for i in range(k):
        for a in range(m):
            d = pis[i, tails[a]] - pis[i, heads[a]]
            ad = abs(d)
            if ad < grad_eps:
                ad = grad_eps
            dd = isb[a] / (2.0 * math.sqrt(ad))
            g = (coef[tails[a]] - coef[heads[a]]) * dd
            gnode[i, tails[a]] += g
            gnode[i, heads[a]] -= g

    grad = np.empty(k * nf, dtype=np.float64)
    for i in range(k):
        for j in range(nf):
            grad[i * nf + j] = gnode[i, free_idx[j]]
    return f, grad


def _descend_loops(theta0, k, nf, free_idx, base_pi, tails, heads, isb,
                   s_idx, cons, target, weight, value_coef, grad_eps,
                   lo, hi, max_iter, step_tol):
    dims = k * nf
    theta = theta0.copy()
    f, grad = _eval_fg_loops(theta, k, nf, free_idx, base_pi, tails, heads,
                             isb, s_idx, cons, target, weight, value_coef,
                             grad_eps)
    t = 1.0
    iters = 0
    cand = np.empty(dims, dtype=np.float64)
    for _ in range(max_iter):
        iters += 1
        accepted = False
        done = False
        for _bt in range(MAX_BACKTRACKS):
            dinf = 0.0
            dn2 = 0.0
            for j in range(dims):
                c = theta[j] - t * grad[j]
                if c < lo:
                    c = lo
                elif c > hi:
                    c = hi
                cand[j] = c
                step = c - theta[j]
                dn2 += step * step
                if abs(step) > dinf:
                    dinf = abs(step)
            if dinf <= step_tol:
                done = True
                break
            fc = _eval_f_loops(cand, k, nf, free_idx, base_pi, tails, heads,
                               isb, s_idx, cons, target, weight, value_coef)
            if fc <= f - (ARMIJO_SIGMA / t) * dn2:
                for j in range(dims):
                    theta[j] = cand[j]
                f, grad = _eval_fg_loops(theta, k, nf, free_idx, base_pi,
                                         tails, heads, isb, s_idx, cons,
                                         target, weight, value_coef, grad_eps)
                t *= STEP_GROW
                if t > STEP_MAX:
                    t = STEP_MAX
                accepted = True
                break
            t *= STEP_SHRINK
            if t < STEP_MIN:
                done = True
                break
        if done or not accepted:
            break
    return theta, iters


def _lm_loops(theta0, k, nf, free_idx, base_pi, tails, heads, isb,
              cons, target, grad_eps, lo, hi, max_iter, r_stop):
    """Levenberg-Marquardt steps on the accumulated-balance residuals.

    Feasibility re-polish: drives the constrained residual vector toward
    zero far faster than gradient descent once a basin has been found.
    Steps are clipped to the box and accepted only when the sum of
    squares decreases.
    """
    n = base_pi.shape[0]
    m = tails.shape[0]
    dims = k * nf
    theta = theta0.copy()

    pos = np.full(n, -1, dtype=np.int64)
    for j in range(nf):
        pos[free_idx[j]] = j
    rows = np.full(n, -1, dtype=np.int64)
    ncons = 0
    for v in range(n):
        if cons[v]:
            rows[v] = ncons
            ncons += 1
    if ncons == 0 or dims == 0:
        return theta

    pis = np.empty((k, n), dtype=np.float64)
    acc = np.empty(n, dtype=np.float64)
    jac = np.empty((ncons, dims), dtype=np.float64)
    lam = 1e-3

    _build_stage_loops(pis, theta, k, nf, free_idx, base_pi)
    _acc_loops(pis, k, tails, heads, isb, acc)
    r = np.empty(ncons, dtype=np.float64)
    for v in range(n):
        if rows[v] >= 0:
            r[rows[v]] = acc[v] - target[v]
    sumsq = float(r @ r)

    for _ in range(max_iter):
        rmax = 0.0
        for c in range(ncons):
            if abs(r[c]) > rmax:
                rmax = abs(r[c])
        if rmax <= r_stop:
            break

        _build_stage_loops(pis, theta, k, nf, free_idx, base_pi)
        for c in range(ncons):
            for d in range(dims):
                jac[c, d] = 0.0
        for i in range(k):
            for a in range(m):
                tt = tails[a]
                hh = heads[a]
                dlt = pis[i, tt] - pis[i, hh]
                ad = abs(dlt)
                if ad < grad_eps:
                    ad = grad_eps
                dd = isb[a] / (2.0 * math.sqrt(ad))
                pt = pos[tt]
                ph = pos[hh]
                rt = rows[tt]
                rh = rows[hh]
                if rt >= 0:
                    if pt >= 0:
                        jac[rt, i * nf + pt] += dd
                    if ph >= 0:
                        jac[rt, i * nf + ph] -= dd
                if rh >= 0:
                    if pt >= 0:
                        jac[rh, i * nf + pt] -= dd
                    if ph >= 0:
                        jac[rh, i * nf + ph] += dd

        jac_t = np.ascontiguousarray(jac.T)
        jtj = jac_t @ jac
        g = jac_t @ r
        improved = False
        for _try in range(12):
            a_mat = jtj.copy()
            for d in range(dims):
                a_mat[d, d] += lam
            step = np.linalg.solve(a_mat, g)
            cand = np.empty(dims, dtype=np.float64)
            for d in range(dims):
                c = theta[d] - step[d]
                if c < lo:
                    c = lo
                elif c > hi:
                    c = hi
                cand[d] = c
            _build_stage_loops(pis, cand, k, nf, free_idx, base_pi)
            _acc_loops(pis, k, tails, heads, isb, acc)
            rc = np.empty(ncons, dtype=np.float64)
            for v in range(n):
                if rows[v] >= 0:
                    rc[rows[v]] = acc[v] - target[v]
            sc = float(rc @ rc)
            if sc < sumsq:
                theta = cand
                r = rc
                sumsq = sc
                lam = max(lam * 0.3, 1e-12)
                improved = True
                break
            lam *= 10.0
            if lam > 1e14:
                break
        if not improved:
            break
    return theta


def _grid_loops(grid_vals, k, nf, free_idx, base_pi, tails, heads, isb,
                s_idx, cons, target, balance_tol):
    n = base_pi.shape[0]
    m = tails.shape[0]
    g = grid_vals.shape[0]
    dims = k * nf
    total = 1
    for _ in range(dims):
        total *= g

    digits = np.zeros(dims, dtype=np.int64)
    pis = np.empty((k, n), dtype=np.float64)
    acc = np.empty(n, dtype=np.float64)
    for i in range(k):
        for v in range(n):
            pis[i, v] = base_pi[v]
        for j in range(nf):
            pis[i, free_idx[j]] = grid_vals[0]

    best_val = -np.inf
    best_code = np.int64(-1)
    for code in range(total):
        _acc_loops(pis, k, tails, heads, isb, acc)
        feasible = True
        for v in range(n):
            if cons[v] and abs(acc[v] - target[v]) > balance_tol:
                feasible = False
                break
        if feasible:
            val = acc[s_idx] if s_idx >= 0 else 0.0
            if val > best_val:
                best_val = val
                best_code = np.int64(code)
        # advance odometer (last digit fastest -> lexicographic order)
        for j in range(dims - 1, -1, -1):
            digits[j] += 1
            if digits[j] < g:
                pis[j // nf, free_idx[j % nf]] = grid_vals[digits[j]]
                break
            digits[j] = 0
            pis[j // nf, free_idx[j % nf]] = grid_vals[0]
    return best_val, best_code


# ---------------------------------------------------------------------------
# vectorized numpy fallback
# ---------------------------------------------------------------------------

def _stages_np(theta, k, nf, free_idx, base_pi):
    pis = np.repeat(base_pi[None, :], k, axis=0)
    if nf:
        pis[:, free_idx] = theta.reshape(k, nf)
    return pis


def _acc_np(pis, tails, heads, isb):
    delta = pis[:, tails] - pis[:, heads]
    x = np.copysign(np.sqrt(np.abs(delta)), delta) * isb
    xsum = x.sum(axis=0)
    acc = np.zeros(pis.shape[1], dtype=np.float64)
    np.add.at(acc, tails, xsum)
    np.subtract.at(acc, heads, xsum)
    return acc


def _eval_f_np(theta, k, nf, free_idx, base_pi, tails, heads, isb,
               s_idx, cons, target, weight, value_coef):
    acc = _acc_np(_stages_np(theta, k, nf, free_idx, base_pi), tails, heads, isb)
    f = -value_coef * acc[s_idx] if s_idx >= 0 else 0.0
    r = np.where(cons, acc - target, 0.0)
    return f + weight * float(r @ r)


def _eval_fg_np(theta, k, nf, free_idx, base_pi, tails, heads, isb,
                s_idx, cons, target, weight, value_coef, grad_eps):
    n = base_pi.shape[0]
    pis = _stages_np(theta, k, nf, free_idx, base_pi)
    acc = _acc_np(pis, tails, heads, isb)

    f = -value_coef * acc[s_idx] if s_idx >= 0 else 0.0
    r = np.where(cons, acc - target, 0.0)
    f += weight * float(r @ r)

    coef = 2.0 * weight * r
    if s_idx >= 0:
        coef[s_idx] -= value_coef

    delta = pis[:, tails] - pis[:, heads]
    dd = isb / (2.0 * np.sqrt(np.maximum(np.abs(delta), grad_eps)))
    garc = (coef[tails] - coef[heads]) * dd
    gnode = np.zeros((pis.shape[0], n), dtype=np.float64)
    rows = np.arange(pis.shape[0])[:, None]
    np.add.at(gnode, (rows, tails[None, :]), garc)
    np.subtract.at(gnode, (rows, heads[None, :]), garc)
    return f, gnode[:, free_idx].ravel()


def _descend_np(theta0, k, nf, free_idx, base_pi, tails, heads, isb,
                s_idx, cons, target, weight, value_coef, grad_eps,
                lo, hi, max_iter, step_tol):
    theta = theta0.copy()
    f, grad = _eval_fg_np(theta, k, nf, free_idx, base_pi, tails, heads, isb,
                          s_idx, cons, target, weight, value_coef, grad_eps)
    t = 1.0
    iters = 0
    for _ in range(max_iter):
        iters += 1
        accepted = False
        done = False
        for _bt in range(MAX_BACKTRACKS):
            cand = np.clip(theta - t * grad, lo, hi)
            step = cand - theta
            dinf = float(np.max(np.abs(step))) if step.size else 0.0
            if dinf <= step_tol:
                done = True
                break
            dn2 = float(step @ step)
            fc = _eval_f_np(cand, k, nf, free_idx, base_pi, tails, heads,
                            isb, s_idx, cons, target, weight, value_coef)
            if fc <= f - (ARMIJO_SIGMA / t) * dn2:
                theta = cand
                f, grad = _eval_fg_np(theta, k, nf, free_idx, base_pi, tails,
                                      heads, isb, s_idx, cons, target,
                                      weight, value_coef, grad_eps)
                t = min(t * STEP_GROW, STEP_MAX)
                accepted = True
                break
            t *= STEP_SHRINK
            if t < STEP_MIN:
                done = True
                break
        if done or not accepted:
            break
    return theta, iters


def _lm_np(theta0, k, nf, free_idx, base_pi, tails, heads, isb,
           cons, target, grad_eps, lo, hi, max_iter, r_stop):
    n = base_pi.shape[0]
    dims = k * nf
    theta = theta0.copy()

    pos = np.full(n, -1, dtype=np.int64)
    pos[free_idx] = np.arange(nf)
    cons_nodes = np.nonzero(cons)[0]
    ncons = cons_nodes.size
    if ncons == 0 or dims == 0:
        return theta

    def residuals(th):
        acc = _acc_np(_stages_np(th, k, nf, free_idx, base_pi), tails, heads, isb)
        return acc[cons_nodes] - target[cons_nodes]

    rows = np.full(n, -1, dtype=np.int64)
    rows[cons_nodes] = np.arange(ncons)
    r = residuals(theta)
    sumsq = float(r @ r)
    lam = 1e-3

    for _ in range(max_iter):
        if float(np.max(np.abs(r))) <= r_stop:
            break
        pis = _stages_np(theta, k, nf, free_idx, base_pi)
        delta = pis[:, tails] - pis[:, heads]
        dd = isb / (2.0 * np.sqrt(np.maximum(np.abs(delta), grad_eps)))
        jac = np.zeros((ncons, dims))
        for i in range(k):
            for a in range(tails.shape[0]):
                tt, hh = tails[a], heads[a]
                w = dd[i, a]
                for node, sgn in ((tt, 1.0), (hh, -1.0)):
                    if rows[node] < 0:
                        continue
                    if pos[tt] >= 0:
                        jac[rows[node], i * nf + pos[tt]] += sgn * w
                    if pos[hh] >= 0:
                        jac[rows[node], i * nf + pos[hh]] -= sgn * w
        jtj = jac.T @ jac
        g = jac.T @ r
        improved = False
        for _try in range(12):
            step = np.linalg.solve(jtj + lam * np.eye(dims), g)
            cand = np.clip(theta - step, lo, hi)
            rc = residuals(cand)
            sc = float(rc @ rc)
            if sc < sumsq:
                theta, r, sumsq = cand, rc, sc
                lam = max(lam * 0.3, 1e-12)
                improved = True
                break
            lam *= 10.0
            if lam > 1e14:
                break
        if not improved:
            break
    return theta


def _grid_np(grid_vals, k, nf, free_idx, base_pi, tails, heads, isb,
             s_idx, cons, target, balance_tol, chunk=65536):
    n = base_pi.shape[0]
    g = grid_vals.shape[0]
    dims = k * nf
    total = g ** dims
    shape = (g,) * dims

    best_val = -np.inf
    best_code = -1
    cons_cols = np.nonzero(cons)[0]
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digs = np.stack(np.unravel_index(codes, shape), axis=1)
        theta = grid_vals[digs]
        c = codes.shape[0]
        pis = np.repeat(base_pi[None, None, :], c, axis=0).reshape(c, 1, n)
        pis = np.repeat(pis, k, axis=1)
        for j in range(dims):
            pis[:, j // nf, free_idx[j % nf]] = theta[:, j]
        delta = pis[:, :, tails] - pis[:, :, heads]
        x = np.copysign(np.sqrt(np.abs(delta)), delta) * isb
        xsum = x.sum(axis=1)
        acc = np.zeros((c, n), dtype=np.float64)
        rows = np.arange(c)[:, None]
        np.add.at(acc, (rows, tails[None, :]), xsum)
        np.subtract.at(acc, (rows, heads[None, :]), xsum)
        if cons_cols.size:
            resid = np.max(np.abs(acc[:, cons_cols] - target[cons_cols]), axis=1)
        else:
            resid = np.zeros(c)
        feas = resid <= balance_tol
        vals = acc[:, s_idx] if s_idx >= 0 else np.zeros(c)
        vals = np.where(feas, vals, -np.inf)
        ci = int(np.argmax(vals))
        if vals[ci] > best_val:
            best_val = float(vals[ci])
            best_code = int(codes[ci])
    return best_val, best_code


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

NUMBA_ENABLED = False
if NUMBA_REQUESTED:
    try:
        from numba import njit

        _build_stage_loops = njit(cache=True)(_build_stage_loops)
        _acc_loops = njit(cache=True)(_acc_loops)
        _eval_f_loops = njit(cache=True)(_eval_f_loops)
        _eval_fg_loops = njit(cache=True)(_eval_fg_loops)
        _descend_loops = njit(cache=True)(_descend_loops)
        _lm_loops = njit(cache=True)(_lm_loops)
        _grid_loops = njit(cache=True)(_grid_loops)
        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - environment without numba
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    descend = _descend_loops
    lm_polish = _lm_loops
    grid_search = _grid_loops
else:
    descend = _descend_np
    lm_polish = _lm_np
    grid_search = _grid_np


def accumulated_outflow(theta, k, nf, free_idx, base_pi, tails, heads, isb):
    """Exact accumulated net outflow per node (no clamping); numpy path.

    Used for final candidate metrics in both backends so that reported
    values and residuals are backend-independent.
    """
    return _acc_np(_stages_np(theta, k, nf, free_idx, base_pi), tails, heads, isb)


def backends():
    """Both kernel implementations, for benchmarking and cross-checks."""
    table = {"numpy": {"descend": _descend_np, "lm": _lm_np, "grid": _grid_np}}
    if NUMBA_ENABLED:
        table["numba"] = {"descend": _descend_loops, "lm": _lm_loops,
                          "grid": _grid_loops}
    return table
