"""NumPy/SciPy implementations of the kernels in ``_kernels.pyx``.

Used when the compiled extension is unavailable or when ``XBM_PURE_PYTHON``
is set. Signatures and results match the compiled versions.
"""
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

_SOURCE_CHUNK = 256


def edge_scatter(x, src, dst, w, n_out):
    n_in = x.shape[1]
    mat = sp.csr_matrix((w, (src, dst)), shape=(n_in, n_out))
    return np.ascontiguousarray(mat.T.dot(x.T).T, dtype=np.float64)


def edge_outer(x, y, rows, cols):
    g = np.zeros(rows.shape[0], dtype=np.float64)
    # chunk over the batch to bound the (batch x edges) temporaries
    step = max(1, 2_000_000 // max(rows.shape[0], 1))
    for start in range(0, x.shape[0], step):
        xs = x[start:start + step]
        ys = y[start:start + step]
        g += np.einsum("be,be->e", xs[:, rows], ys[:, cols])
    return g


def bfs_distance_stats(indptr, indices, sources):
    n = indptr.shape[0] - 1
    adj = sp.csr_matrix((np.ones(indices.shape[0]), indices, indptr), shape=(n, n))
    total = 0
    pairs = 0
    maxd = 0
    for start in range(0, len(sources), _SOURCE_CHUNK):
        chunk = np.asarray(sources[start:start + _SOURCE_CHUNK])
        d = shortest_path(adj, unweighted=True, directed=False, indices=chunk)
        finite = d[np.isfinite(d) & (d > 0)]
        total += int(finite.sum())
        pairs += int(finite.size)
        if finite.size:
            maxd = max(maxd, int(finite.max()))
    return total, pairs, maxd


def latapy_node_clustering(indptr, indices):
    n = indptr.shape[0] - 1
    adj = sp.csr_matrix((np.ones(indices.shape[0]), indices, indptr), shape=(n, n))
    deg = np.diff(indptr)
    two_hop = (adj @ adj).tocoo()
    off = two_hop.row != two_hop.col
    r, c, shared = two_hop.row[off], two_hop.col[off], two_hop.data[off]
    ratio = shared / (deg[r] + deg[c] - shared)
    sums = np.bincount(r, weights=ratio, minlength=n)
    counts = np.bincount(r, minlength=n)
    cc = np.full(n, np.nan)
    has = counts > 0
    cc[has] = sums[has] / counts[has]
    return cc
