"""Sparse bipartite connectivity between a visible and a hidden layer."""
from __future__ import annotations

import io

import numpy as np

from ._io import load_npz, save_npz
from .errors import FormatError, ParameterError

BINARY_FORMAT_VERSION = 1


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class BipartiteGraph:
    """Immutable simple bipartite graph.

    Nodes are 0-based: visible ``0..n_v-1`` and hidden ``0..n_h-1``. Edges are
    stored as parallel ``rows``/``cols`` arrays sorted by ``(row, col)``; this
    edge order is the order model weights are aligned with.
    """

    __slots__ = (
        "n_v", "n_h", "rows", "cols",
        "_vis_indptr", "_hid_indptr", "_hid_edges", "_adj",
    )

    def __init__(self, n_v, n_h, rows, cols):
        n_v = int(n_v)
        n_h = int(n_h)
        if n_v < 1 or n_h < 1:
            raise ParameterError(f"layer sizes must be positive, got {n_v}x{n_h}")
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        if rows.shape != cols.shape:
            raise ParameterError("rows and cols must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_v or cols.min() < 0 or cols.max() >= n_h:
                raise ParameterError("edge endpoint out of range")
        key = rows * n_h + cols
        order = np.argsort(key, kind="stable")
        key = key[order]
        if key.size > 1 and np.any(key[1:] == key[:-1]):
            raise ParameterError("duplicate edges")
        self.n_v = n_v
        self.n_h = n_h
        self.rows = _readonly(rows[order])
        self.cols = _readonly(cols[order])
        self._vis_indptr = None
        self._hid_indptr = None
        self._hid_edges = None
        self._adj = None

    # construction helpers
    @classmethod
    def from_edges(cls, n_v, n_h, edges):
        edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        return cls(n_v, n_h, edges[:, 0], edges[:, 1])

    @classmethod
    def complete(cls, n_v, n_h):
        rows = np.repeat(np.arange(n_v, dtype=np.int64), n_h)
        cols = np.tile(np.arange(n_h, dtype=np.int64), n_v)
        return cls(n_v, n_h, rows, cols)

    @classmethod
    def from_mask(cls, mask):
        mask = np.asarray(mask, dtype=bool)
        rows, cols = np.nonzero(mask)
        return cls(mask.shape[0], mask.shape[1], rows, cols)

    # basic queries
    @property
    def n_edges(self):
        return int(self.rows.size)

    def __len__(self):
        return self.n_edges

    def __eq__(self, other):
        if not isinstance(other, BipartiteGraph):
            return NotImplemented
        return (
            self.n_v == other.n_v
            and self.n_h == other.n_h
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
        )

    def __hash__(self):
        return hash((self.n_v, self.n_h, self.rows.tobytes(), self.cols.tobytes()))

    def __repr__(self):
        return f"BipartiteGraph(n_v={self.n_v}, n_h={self.n_h}, n_edges={self.n_edges})"

    @property
    def is_complete(self):
        return self.n_edges == self.n_v * self.n_h

    def visible_degrees(self):
        return np.bincount(self.rows, minlength=self.n_v)

    def hidden_degrees(self):
        return np.bincount(self.cols, minlength=self.n_h)

    def to_mask(self):
        mask = np.zeros((self.n_v, self.n_h), dtype=bool)
        mask[self.rows, self.cols] = True
        return mask

    def edge_set(self):
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    def has_edge(self, i, j):
        lo, hi = self.visible_indptr[i], self.visible_indptr[i + 1]
        k = lo + np.searchsorted(self.cols[lo:hi], j)
        return bool(k < hi and self.cols[k] == j)

    # compressed adjacency, built lazily
    @property
    def visible_indptr(self):
        if self._vis_indptr is None:
            ptr = np.zeros(self.n_v + 1, dtype=np.int64)
            np.cumsum(self.visible_degrees(), out=ptr[1:])
            self._vis_indptr = _readonly(ptr)
        return self._vis_indptr

    @property
    def hidden_indptr(self):
        if self._hid_indptr is None:
            ptr = np.zeros(self.n_h + 1, dtype=np.int64)
            np.cumsum(self.hidden_degrees(), out=ptr[1:])
            self._hid_indptr = _readonly(ptr)
            self._hid_edges = _readonly(np.lexsort((self.rows, self.cols)))
        return self._hid_indptr

    @property
    def hidden_edge_order(self):
        """Edge ids sorted by ``(col, row)``; slices of it follow
        :attr:`hidden_indptr`."""
        self.hidden_indptr
        return self._hid_edges

    def hidden_neighbors(self, i):
        """Hidden units connected to visible unit ``i``."""
        return self.cols[self.visible_indptr[i]:self.visible_indptr[i + 1]]

    def visible_neighbors(self, j):
        """Visible units connected to hidden unit ``j``."""
        ptr = self.hidden_indptr
        return self.rows[self._hid_edges[ptr[j]:ptr[j + 1]]]

    def unified_adjacency(self):
        """CSR ``(indptr, indices)`` over ``n_v + n_h`` nodes, hidden nodes
        offset by ``n_v``."""
        if self._adj is None:
            n = self.n_v + self.n_h
            src = np.concatenate([self.rows, self.cols + self.n_v])
            dst = np.concatenate([self.cols + self.n_v, self.rows])
            order = np.lexsort((dst, src))
            indices = dst[order]
            ptr = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(np.bincount(src, minlength=n), out=ptr[1:])
            self._adj = (_readonly(ptr), _readonly(indices))
        return self._adj

    # derived graphs
    def add_edges(self, rows, cols):
        """New graph with extra edges; already-present ones are ignored."""
        rows = np.concatenate([self.rows, np.asarray(rows, dtype=np.int64)])
        cols = np.concatenate([self.cols, np.asarray(cols, dtype=np.int64)])
        key = np.unique(rows * self.n_h + cols)
        return BipartiteGraph(self.n_v, self.n_h, key // self.n_h, key % self.n_h)

    def keep_edges(self, keep):
        keep = np.asarray(keep)
        return BipartiteGraph(self.n_v, self.n_h, self.rows[keep], self.cols[keep])

    def relabel_visible(self, perm):
        """Move visible slot ``s`` to index ``perm[s]``."""
        perm = np.asarray(perm, dtype=np.int64)
        if perm.shape != (self.n_v,) or not np.array_equal(np.sort(perm), np.arange(self.n_v)):
            raise ParameterError("perm must be a permutation of the visible indices")
        return BipartiteGraph(self.n_v, self.n_h, perm[self.rows], self.cols)

    def relabel_hidden(self, perm):
        perm = np.asarray(perm, dtype=np.int64)
        if perm.shape != (self.n_h,) or not np.array_equal(np.sort(perm), np.arange(self.n_h)):
            raise ParameterError("perm must be a permutation of the hidden indices")
        return BipartiteGraph(self.n_v, self.n_h, self.rows, perm[self.cols])

    # serialization
    def to_text(self, comments=()):
        """Header ``bipartite n_v n_h |E|`` then ``i j`` per line, 1-based,
        sorted. Optional ``# ...`` comment lines precede the header."""
        buf = io.StringIO()
        for c in comments:
            buf.write(f"# {c}\n")
        buf.write(f"bipartite {self.n_v} {self.n_h} {self.n_edges}\n")
        if self.n_edges:
            pairs = np.column_stack([self.rows + 1, self.cols + 1])
            np.savetxt(buf, pairs, fmt="%d")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text):
        lines = [ln.strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln and not ln.startswith("#")]
        if not lines:
            raise FormatError("empty graph file")
        head = lines[0].split()
        if len(head) != 4 or head[0] != "bipartite":
            raise FormatError(f"bad header line: {lines[0]!r}")
        try:
            n_v, n_h, n_e = (int(t) for t in head[1:])
        except ValueError as exc:
            raise FormatError(f"bad header line: {lines[0]!r}") from exc
        body = lines[1:]
        if len(body) != n_e:
            raise FormatError(f"header declares {n_e} edges, found {len(body)}")
        if n_e:
            try:
                pairs = np.array([ln.split() for ln in body], dtype=np.int64)
            except ValueError as exc:
                raise FormatError("non-integer edge line") from exc
            if pairs.ndim != 2 or pairs.shape[1] != 2:
                raise FormatError("edge lines must hold exactly two integers")
        else:
            pairs = np.zeros((0, 2), dtype=np.int64)
        try:
            return cls(n_v, n_h, pairs[:, 0] - 1, pairs[:, 1] - 1)
        except ParameterError as exc:
            raise FormatError(f"invalid edge list: {exc}") from exc

    def save_text(self, path, comments=()):
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(self.to_text(comments))

    @classmethod
    def load_text(cls, path):
        with open(path, encoding="ascii") as fh:
            return cls.from_text(fh.read())

    def to_arrays(self, prefix="graph_"):
        return {
            f"{prefix}format_version": np.array(BINARY_FORMAT_VERSION),
            f"{prefix}shape": np.array([self.n_v, self.n_h], dtype=np.int64),
            f"{prefix}rows": np.asarray(self.rows),
            f"{prefix}cols": np.asarray(self.cols),
        }

    @classmethod
    def from_arrays(cls, arrays, prefix="graph_"):
        version = int(arrays[f"{prefix}format_version"])
        if version != BINARY_FORMAT_VERSION:
            raise FormatError(f"unsupported graph format version {version}")
        n_v, n_h = (int(x) for x in arrays[f"{prefix}shape"])
        return cls(n_v, n_h, arrays[f"{prefix}rows"], arrays[f"{prefix}cols"])

    def save(self, path):
        """Versioned binary (``.npz``) round-trip format."""
        save_npz(path, self.to_arrays())

    @classmethod
    def load(cls, path):
        return cls.from_arrays(load_npz(path))
