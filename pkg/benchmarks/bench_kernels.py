"""Compare the compiled and pure-Python kernel backends.

Run with ``python3 benchmarks/bench_kernels.py``. Each kernel is timed on
the same inputs through both modules and the outputs are checked for
agreement before any timing is reported.
"""
import argparse
import time
import warnings

import numpy as np

from xbm import _kernels_py
from xbm.topology import TopologyParams, generate_topology

try:
    from xbm import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(n_v, n_h, batch, seed):
    rng = np.random.default_rng(seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g = generate_topology(n_v, n_h, TopologyParams(), rng).graph
    w = rng.standard_normal(g.n_edges)
    x = np.ascontiguousarray(rng.random((batch, n_v)))
    y = np.ascontiguousarray(rng.random((batch, n_h)))
    indptr, indices = g.unified_adjacency()
    sources = np.arange(min(500, n_v + n_h), dtype=np.int64)
    return {
        "edge_scatter": lambda k: k.edge_scatter(x, g.rows, g.cols, w, n_h),
        "edge_outer": lambda k: k.edge_outer(x, y, g.rows, g.cols),
        "bfs_distance_stats": lambda k: k.bfs_distance_stats(indptr, indices, sources),
        "latapy_node_clustering": lambda k: k.latapy_node_clustering(indptr, indices),
    }, g


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(p, q) for p, q in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-12, equal_nan=True)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sizes", default="100x100,784x500,1000x1000")
    ap.add_argument("--batch", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _kernels_c is None:
        print("compiled extension not available; only the Python backend can be timed")
    print(f"{'size':>10} {'edges':>7} {'kernel':>24} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for size in args.sizes.split(","):
        n_v, n_h = map(int, size.split("x"))
        kernels, g = cases(n_v, n_h, args.batch, args.seed)
        for name, call in kernels.items():
            tp, out_p = best_of(lambda: call(_kernels_py), args.repeat)
            if _kernels_c is None:
                print(f"{size:>10} {g.n_edges:>7} {name:>24} {tp:10.4f} {'-':>10} {'-':>8}")
                continue
            tc, out_c = best_of(lambda: call(_kernels_c), args.repeat)
            if not _same(out_p, out_c):
                raise SystemExit(f"backend mismatch in {name} at {size}")
            print(f"{size:>10} {g.n_edges:>7} {name:>24} {tp:10.4f} {tc:10.4f} {tp / tc:8.1f}")


if __name__ == "__main__":
    main()
