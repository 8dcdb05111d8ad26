# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for sparse bipartite models and graph metrics.

Every function here has a drop-in counterpart in :mod:`xbm._kernels_py`
with identical signature and semantics.
"""
import numpy as np

from libc.stdint cimport int64_t


def edge_scatter(const double[:, ::1] x, const int64_t[::1] src,
                 const int64_t[::1] dst, const double[::1] w, Py_ssize_t n_out):
    """out[b, dst[e]] += x[b, src[e]] * w[e], edges visited in storage order."""
    cdef Py_ssize_t n_batch = x.shape[0]
    cdef Py_ssize_t n_edges = src.shape[0]
    cdef Py_ssize_t b, e
    cdef int64_t s, d
    cdef double we
    # batch innermost on transposed copies keeps the inner loop contiguous
    cdef double[:, ::1] xt = np.ascontiguousarray(np.asarray(x).T)
    out_t = np.zeros((n_out, n_batch), dtype=np.float64)
    cdef double[:, ::1] o = out_t
    with nogil:
        for e in range(n_edges):
            s = src[e]
            d = dst[e]
            we = w[e]
            for b in range(n_batch):
                o[d, b] += xt[s, b] * we
    return np.ascontiguousarray(out_t.T)


def edge_outer(const double[:, ::1] x, const double[:, ::1] y,
               const int64_t[::1] rows, const int64_t[::1] cols):
    """g[e] = sum_b x[b, rows[e]] * y[b, cols[e]]."""
    cdef Py_ssize_t n_batch = x.shape[0]
    cdef Py_ssize_t n_edges = rows.shape[0]
    cdef Py_ssize_t b, e
    cdef int64_t r, c
    cdef double acc
    cdef double[:, ::1] xt = np.ascontiguousarray(np.asarray(x).T)
    cdef double[:, ::1] yt = np.ascontiguousarray(np.asarray(y).T)
    g = np.zeros(n_edges, dtype=np.float64)
    cdef double[::1] gv = g
    with nogil:
        for e in range(n_edges):
            r = rows[e]
            c = cols[e]
            acc = 0.0
            for b in range(n_batch):
                acc = acc + xt[r, b] * yt[c, b]
            gv[e] = acc
    return g


def bfs_distance_stats(const int64_t[::1] indptr, const int64_t[::1] indices,
                       const int64_t[::1] sources):
    """Breadth-first search from each source.

    Returns ``(total_distance, reachable_pairs, max_distance)`` over ordered
    (source, target) pairs with target != source and target reachable.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t n_src = sources.shape[0]
    cdef int64_t[::1] dist = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] queue = np.empty(max(n, 1), dtype=np.int64)
    cdef Py_ssize_t si, head, tail, k, i
    cdef int64_t s, u, v, du
    cdef int64_t total = 0
    cdef int64_t pairs = 0
    cdef int64_t maxd = 0
    with nogil:
        for si in range(n_src):
            s = sources[si]
            for i in range(n):
                dist[i] = -1
            dist[s] = 0
            queue[0] = s
            head = 0
            tail = 1
            while head < tail:
                u = queue[head]
                head += 1
                du = dist[u] + 1
                for k in range(indptr[u], indptr[u + 1]):
                    v = indices[k]
                    if dist[v] < 0:
                        dist[v] = du
                        total += du
                        pairs += 1
                        if du > maxd:
                            maxd = du
                        queue[tail] = v
                        tail += 1
    return int(total), int(pairs), int(maxd)


def latapy_node_clustering(const int64_t[::1] indptr, const int64_t[::1] indices):
    """Per-node Latapy pairwise-overlap clustering; NaN where a node has no
    distance-2 neighbour."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cc = np.full(n, np.nan, dtype=np.float64)
    cdef double[::1] ccv = cc
    cdef int64_t[::1] mark = np.full(n, -1, dtype=np.int64)
    cdef int64_t[::1] shared = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] found = np.empty(max(n, 1), dtype=np.int64)
    cdef Py_ssize_t u, k, kk, m, t
    cdef int64_t x, w, deg_u, deg_w, sh
    cdef double acc
    with nogil:
        for u in range(n):
            m = 0
            for k in range(indptr[u], indptr[u + 1]):
                x = indices[k]
                for kk in range(indptr[x], indptr[x + 1]):
                    w = indices[kk]
                    if w == u:
                        continue
                    if mark[w] != u:
                        mark[w] = u
                        shared[w] = 0
                        found[m] = w
                        m += 1
                    shared[w] += 1
            if m == 0:
                continue
            deg_u = indptr[u + 1] - indptr[u]
            acc = 0.0
            for t in range(m):
                w = found[t]
                sh = shared[w]
                deg_w = indptr[w + 1] - indptr[w]
                acc += <double>sh / <double>(deg_u + deg_w - sh)
            ccv[u] = acc / m
    return cc
