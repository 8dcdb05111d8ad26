"""Backend selection for the hot loops.

The compiled extension ``xbm._kernels`` is used when importable; otherwise
(or when the ``XBM_PURE_PYTHON`` environment variable is non-empty) the
NumPy/SciPy versions from ``xbm._kernels_py`` are used.
"""
import os

from . import _kernels_py

if os.environ.get("XBM_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

edge_scatter = _impl.edge_scatter
edge_outer = _impl.edge_outer
bfs_distance_stats = _impl.bfs_distance_stats
latapy_node_clustering = _impl.latapy_node_clustering

__all__ = [
    "BACKEND",
    "edge_scatter",
    "edge_outer",
    "bfs_distance_stats",
    "latapy_node_clustering",
]
