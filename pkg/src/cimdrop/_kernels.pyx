# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; mirrors cimdrop._kernels_py exactly."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t

cnp.import_array()

cdef int64_t BIG = 1 << 60


def sar_walk(thresholds, lo_child, hi_child, leaf_code, mavs):
    cdef double[::1] thr = np.ascontiguousarray(thresholds, dtype=np.float64)
    cdef int64_t[::1] lo = np.ascontiguousarray(lo_child, dtype=np.int64)
    cdef int64_t[::1] hi = np.ascontiguousarray(hi_child, dtype=np.int64)
    cdef int64_t[::1] code = np.ascontiguousarray(leaf_code, dtype=np.int64)
    cdef double[::1] v = np.ascontiguousarray(np.asarray(mavs, dtype=np.float64).reshape(-1))
    cdef Py_ssize_t m = v.shape[0]
    out_codes = np.empty(m, dtype=np.int64)
    out_cycles = np.empty(m, dtype=np.int64)
    cdef int64_t[::1] oc = out_codes
    cdef int64_t[::1] ocy = out_cycles
    cdef Py_ssize_t idx
    cdef int64_t node, c
    cdef double x
    for idx in range(m):
        x = v[idx]
        node = 0
        c = 0
        while lo[node] >= 0:
            if x >= thr[node]:
                node = hi[node]
            else:
                node = lo[node]
            c += 1
        oc[idx] = code[node]
        ocy[idx] = c
    return out_codes, out_cycles


def nearest_neighbor_path(dist, Py_ssize_t start):
    cdef int64_t[:, ::1] d = np.ascontiguousarray(dist, dtype=np.int64)
    cdef Py_ssize_t n = d.shape[0]
    seen_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] seen = seen_arr
    order_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] order = order_arr
    cdef Py_ssize_t step, j, cur = start, best_j
    cdef int64_t best
    order[0] = start
    seen[start] = 1
    for step in range(1, n):
        best = BIG
        best_j = -1
        for j in range(n):
            if not seen[j] and d[cur, j] < best:
                best = d[cur, j]
                best_j = j
        order[step] = best_j
        seen[best_j] = 1
        cur = best_j
    return order_arr


def two_opt_path(dist, order, long long max_evals):
    cdef int64_t[:, ::1] d = np.ascontiguousarray(dist, dtype=np.int64)
    o_arr = np.array(order, dtype=np.int64, copy=True)
    cdef int64_t[::1] o = o_arr
    cdef Py_ssize_t n = o.shape[0]
    cdef long long evals = 0
    cdef bint improved = True
    cdef Py_ssize_t i, j, a, b
    cdef int64_t delta, tmp
    while improved and evals < max_evals:
        improved = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                if i == 0 and j == n - 1:
                    continue
                evals += 1
                delta = 0
                if i > 0:
                    delta += d[o[i - 1], o[j]] - d[o[i - 1], o[i]]
                if j < n - 1:
                    delta += d[o[i], o[j + 1]] - d[o[j], o[j + 1]]
                if delta < 0:
                    a = i
                    b = j
                    while a < b:
                        tmp = o[a]
                        o[a] = o[b]
                        o[b] = tmp
                        a += 1
                        b -= 1
                    improved = True
                if evals >= max_evals:
                    break
            if evals >= max_evals:
                break
    return o_arr, evals


def held_karp_path(dist):
    cdef int64_t[:, ::1] d = np.ascontiguousarray(dist, dtype=np.int64)
    cdef Py_ssize_t n = d.shape[0]
    if n == 1:
        return 0, np.zeros(1, dtype=np.int64)
    cdef Py_ssize_t nstates = (<Py_ssize_t>1) << n
    cost_arr = np.full((nstates, n), BIG, dtype=np.int64)
    parent_arr = np.full((nstates, n), -1, dtype=np.int64)
    cdef int64_t[:, ::1] cost = cost_arr
    cdef int64_t[:, ::1] parent = parent_arr
    cdef Py_ssize_t mask, nm, j, k, last, prev
    cdef int64_t cj, c
    for j in range(n):
        cost[(<Py_ssize_t>1) << j, j] = 0
    for mask in range(1, nstates):
        for j in range(n):
            cj = cost[mask, j]
            if cj == BIG:
                continue
            for k in range(n):
                if mask & ((<Py_ssize_t>1) << k):
                    continue
                nm = mask | ((<Py_ssize_t>1) << k)
                c = cj + d[j, k]
                if c < cost[nm, k]:
                    cost[nm, k] = c
                    parent[nm, k] = j
    cdef Py_ssize_t full = nstates - 1
    last = 0
    for j in range(1, n):
        if cost[full, j] < cost[full, last]:
            last = j
    best = cost[full, last]
    order = []
    mask = full
    while last >= 0:
        order.append(last)
        prev = parent[mask, last]
        mask ^= (<Py_ssize_t>1) << last
        last = prev
    return int(best), np.asarray(order[::-1], dtype=np.int64)
