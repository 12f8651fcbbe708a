"""Hot numeric kernels: assignment solver and tile distances.

Kernels are compiled with numba unless the environment variable
``TILESHIFT_NO_NUMBA`` is set to a truthy value, in which case the same code
runs interpreted (and the tile-distance kernel falls back to a vectorized
numpy path, see assignment.py).  The paths agree to floating-point roundoff
and any one path is fully deterministic; see benchmarks/bench_kernels.py for
the speed comparison.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("TILESHIFT_NO_NUMBA", "").lower() in ("1", "true", "yes")

if not _DISABLED:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay importable
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


@njit(cache=True)
def lap_core(cost, src_of_col, dests):
    """Shortest-augmenting-path assignment over a logically expanded matrix.

    Assigns every destination in ``dests`` to a distinct expanded column.
    ``cost`` is the compact (n_sources, n_dest_total) matrix; expanded column
    ``j`` stands for one usable copy of source row ``src_of_col[j]``, so the
    copy-expanded matrix is never materialized.

    Returns ``(mapping, u, v)`` where ``mapping[k]`` is the source row chosen
    for ``dests[k]`` and ``u``/``v`` are the optimal dual potentials (used for
    reduced-cost pruning during tie-break refinement).
    """
    n = dests.shape[0]
    m = src_of_col.shape[0]
    u = np.zeros(n, np.float64)
    v = np.zeros(m + 1, np.float64)
    p = np.full(m + 1, -1, np.int64)  # p[j] = index into dests assigned to column j
    way = np.zeros(m + 1, np.int64)
    minv = np.empty(m + 1, np.float64)
    used = np.empty(m + 1, np.bool_)
    for i in range(n):
        p[m] = i
        j0 = m
        for j in range(m + 1):
            minv[j] = np.inf
            used[j] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = -1
            for j in range(m):
                if not used[j]:
                    cur = cost[src_of_col[j], dests[i0]] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == -1:
                break
        while j0 != m:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    mapping = np.empty(n, np.int64)
    for j in range(m):
        if p[j] >= 0:
            mapping[p[j]] = src_of_col[j]
    return mapping, u, v


@njit(cache=True)
def expand_columns(avail, cap):
    """Expanded column -> source row table, with per-source copies capped at cap."""
    total = 0
    for s in range(avail.shape[0]):
        c = avail[s]
        if c > cap:
            c = cap
        total += c
    src_of_col = np.empty(total, np.int64)
    k = 0
    for s in range(avail.shape[0]):
        c = avail[s]
        if c > cap:
            c = cap
        for _ in range(c):
            src_of_col[k] = s
            k += 1
    return src_of_col


@njit(cache=True)
def _residual_optimum(cost, avail, d_start, n_dest):
    """Min cost of covering dests d_start..n_dest-1 with the available copies."""
    n_rem = n_dest - d_start
    if n_rem == 0:
        return 0.0, np.empty(0, np.int64)
    src_of_col = expand_columns(avail, n_rem)
    dests = np.arange(d_start, n_dest)
    mapping, _, _ = lap_core(cost, src_of_col, dests)
    total = 0.0
    for k in range(n_rem):
        total += cost[mapping[k], d_start + k]
    return total, mapping


@njit(cache=True)
def solve_with_lex_tiebreak(cost, copies, tol):
    """Optimal assignment, tie-broken to the lexicographically smallest mapping.

    Returns ``mapping`` with ``mapping[d]`` = source row for destination ``d``.
    Among all minimum-cost assignments (equal within ``tol``), the one whose
    mapping array is lexicographically smallest is returned.
    """
    n_src, n_dest = cost.shape
    src_of_col = expand_columns(copies, n_dest)
    dests = np.arange(n_dest)
    best, u, v = lap_core(cost, src_of_col, dests)
    opt_cost = 0.0
    for d in range(n_dest):
        opt_cost += cost[best[d], d]
    # max dual potential per source over its expanded columns; an edge (s, d)
    # can appear in some optimal assignment only if its reduced cost is ~0
    vmax = np.full(n_src, -np.inf, np.float64)
    for j in range(src_of_col.shape[0]):
        s = src_of_col[j]
        if v[j] > vmax[s]:
            vmax[s] = v[j]

    avail = copies.copy()
    fixed = 0.0
    for d in range(n_dest):
        accepted = False
        for s in range(best[d]):
            if avail[s] <= 0:
                continue
            if cost[s, d] - u[d] - vmax[s] > tol:
                continue
            avail[s] -= 1
            trial = fixed + cost[s, d]
            rem, sub = _residual_optimum(cost, avail, d + 1, n_dest)
            if trial + rem <= opt_cost + tol:
                best[d] = s
                for k in range(sub.shape[0]):
                    best[d + 1 + k] = sub[k]
                accepted = True
                break
            avail[s] += 1
        if not accepted:
            avail[best[d]] -= 1
        fixed += cost[best[d], d]
    return best


@njit(cache=True)
def tile_cost_kernel(ta, tb):
    """Pairwise L2 distances between flattened tile stacks (float64 accumulate)."""
    n, k = ta.shape
    m, _ = tb.shape
    out = np.empty((n, m), np.float64)
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for p in range(k):
                d = np.float64(ta[i, p]) - np.float64(tb[j, p])
                acc += d * d
            out[i, j] = np.sqrt(acc)
    return out


def tile_cost_numpy(ta, tb, chunk=256):
    """Vectorized fallback for :func:`tile_cost_kernel` (identical math)."""
    a = ta.astype(np.float64)
    b = tb.astype(np.float64)
    n = a.shape[0]
    out = np.empty((n, b.shape[0]), np.float64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        diff = a[start:stop, None, :] - b[None, :, :]
        out[start:stop] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out
