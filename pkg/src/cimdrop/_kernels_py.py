"""Pure-Python hot kernels.

Same signatures and results as the compiled ``_kernels`` extension; used when
the extension is missing or ``CIMDROP_PURE_PYTHON=1`` is set.
"""
import numpy as np


def sar_walk(thresholds, lo_child, hi_child, leaf_code, mavs):
    """Walk a threshold tree for every voltage in ``mavs``.

    Node 0 is the root. A node with ``lo_child < 0`` is a leaf. Voltages equal
    to a threshold take the high branch.
    """
    thr = np.asarray(thresholds, dtype=np.float64).tolist()
    lo = np.asarray(lo_child, dtype=np.int64).tolist()
    hi = np.asarray(hi_child, dtype=np.int64).tolist()
    code = np.asarray(leaf_code, dtype=np.int64).tolist()
    v = np.asarray(mavs, dtype=np.float64)
    codes = np.empty(v.size, dtype=np.int64)
    cycles = np.empty(v.size, dtype=np.int64)
    for idx, x in enumerate(v.tolist()):
        node = 0
        c = 0
        while lo[node] >= 0:
            node = hi[node] if x >= thr[node] else lo[node]
            c += 1
        codes[idx] = code[node]
        cycles[idx] = c
    return codes, cycles


def nearest_neighbor_path(dist, start):
    d = np.asarray(dist, dtype=np.int64).tolist()
    n = len(d)
    seen = [False] * n
    order = [int(start)]
    seen[start] = True
    cur = int(start)
    for _ in range(n - 1):
        best, best_j = None, -1
        row = d[cur]
        for j in range(n):
            if not seen[j] and (best is None or row[j] < best):
                best, best_j = row[j], j
        order.append(best_j)
        seen[best_j] = True
        cur = best_j
    return np.asarray(order, dtype=np.int64)


def two_opt_path(dist, order, max_evals):
    """First-improvement 2-opt on an open path.

    Reversing ``order[i..j]`` only changes the edges entering ``i`` and leaving
    ``j``; path ends have no outer edge. Returns ``(order, evaluations)``.
    """
    d = np.asarray(dist, dtype=np.int64).tolist()
    o = [int(x) for x in order]
    n = len(o)
    evals = 0
    improved = True
    while improved and evals < max_evals:
        improved = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                if i == 0 and j == n - 1:
                    continue
                evals += 1
                delta = 0
                if i > 0:
                    delta += d[o[i - 1]][o[j]] - d[o[i - 1]][o[i]]
                if j < n - 1:
                    delta += d[o[i]][o[j + 1]] - d[o[j]][o[j + 1]]
                if delta < 0:
                    o[i : j + 1] = o[i : j + 1][::-1]
                    improved = True
                if evals >= max_evals:
                    break
            if evals >= max_evals:
                break
    return np.asarray(o, dtype=np.int64), evals


def held_karp_path(dist):
    """Exact minimum-cost open Hamiltonian path. Returns ``(cost, order)``."""
    d = np.asarray(dist, dtype=np.int64).tolist()
    n = len(d)
    if n == 1:
        return 0, np.zeros(1, dtype=np.int64)
    full = (1 << n) - 1
    inf = float("inf")
    cost = [[inf] * n for _ in range(1 << n)]
    parent = [[-1] * n for _ in range(1 << n)]
    for j in range(n):
        cost[1 << j][j] = 0
    for mask in range(1, 1 << n):
        cm = cost[mask]
        for j in range(n):
            cj = cm[j]
            if cj == inf:
                continue
            dj = d[j]
            for k in range(n):
                if mask & (1 << k):
                    continue
                nm = mask | (1 << k)
                c = cj + dj[k]
                if c < cost[nm][k]:
                    cost[nm][k] = c
                    parent[nm][k] = j
    last = min(range(n), key=lambda j: cost[full][j])
    best = cost[full][last]
    order = []
    mask = full
    while last >= 0:
        order.append(last)
        prev = parent[mask][last]
        mask ^= 1 << last
        last = prev
    return int(best), np.asarray(order[::-1], dtype=np.int64)
