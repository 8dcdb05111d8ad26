"""Boltzmann machines over an arbitrary sparse bipartite mask.

One class covers all four model families: binary visible units (RBM when
the mask is complete, XBM when it is sparse) and Gaussian visible units
(GRBM / GXBM). Weights live on edges, in the graph's edge order; an absent
edge never enters a computation.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit, log_expit

from . import kernels
from ._io import load_npz, save_npz
from .errors import FormatError, ParameterError
from .graph import BipartiteGraph

BINARY = "binary"
GAUSSIAN = "gaussian"
MODEL_FORMAT_VERSION = 1


def softplus(x):
    return -log_expit(-x)


def _batch(x, n, name):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.ndim != 2 or x2.shape[1] != n:
        raise ParameterError(f"{name} must have {n} columns, got shape {x.shape}")
    return np.ascontiguousarray(x2), single


class BoltzmannMachine:
    """Sparse restricted Boltzmann machine.

    Parameters
    ----------
    visible_kind : {"binary", "gaussian"}
    graph : BipartiteGraph
        Connectivity; use :meth:`BipartiteGraph.complete` for a dense model.
    weights : array, shape (n_edges,)
        One weight per edge, aligned with ``graph.rows``/``graph.cols``.
    visible_bias, hidden_bias : arrays of length n_v, n_h
    sigma : array of length n_v, optional
        Visible standard deviations; required (and only allowed) for the
        Gaussian kind.
    """

    def __init__(self, visible_kind, graph, weights, visible_bias, hidden_bias, sigma=None):
        if visible_kind not in (BINARY, GAUSSIAN):
            raise ParameterError(f"unknown visible kind {visible_kind!r}")
        self.visible_kind = visible_kind
        self.graph = graph
        self.weights = np.array(weights, dtype=np.float64).ravel()
        self.visible_bias = np.array(visible_bias, dtype=np.float64).ravel()
        self.hidden_bias = np.array(hidden_bias, dtype=np.float64).ravel()
        if self.weights.shape != (graph.n_edges,):
            raise ParameterError(f"need {graph.n_edges} weights, got {self.weights.size}")
        if self.visible_bias.shape != (graph.n_v,) or self.hidden_bias.shape != (graph.n_h,):
            raise ParameterError("bias lengths must match layer sizes")
        if visible_kind == GAUSSIAN:
            sigma = np.ones(graph.n_v) if sigma is None else np.array(sigma, dtype=np.float64).ravel()
            if sigma.shape != (graph.n_v,) or np.any(~(sigma > 0)):
                raise ParameterError("sigma must be positive, one per visible unit")
            self.sigma = sigma
        else:
            if sigma is not None:
                raise ParameterError("sigma is only defined for gaussian visible units")
            self.sigma = None

    @classmethod
    def initialize(cls, visible_kind, graph, rng=None, weight_std=0.01, sigma=None):
        """Weights ~ N(0, weight_std**2), zero biases, unit sigma for the
        Gaussian kind."""
        rng = np.random.default_rng(rng)
        w = rng.normal(0.0, weight_std, size=graph.n_edges)
        if visible_kind == GAUSSIAN and sigma is None:
            sigma = np.ones(graph.n_v)
        return cls(visible_kind, graph, w, np.zeros(graph.n_v), np.zeros(graph.n_h), sigma)

    @classmethod
    def from_dense(cls, visible_kind, W, visible_bias, hidden_bias, sigma=None, mask=None):
        W = np.asarray(W, dtype=np.float64)
        graph = BipartiteGraph.complete(*W.shape) if mask is None else BipartiteGraph.from_mask(mask)
        return cls(visible_kind, graph, W[graph.rows, graph.cols], visible_bias, hidden_bias, sigma)

    @property
    def n_visible(self):
        return self.graph.n_v

    @property
    def n_hidden(self):
        return self.graph.n_h

    @property
    def is_gaussian(self):
        return self.visible_kind == GAUSSIAN

    def copy(self, **changes):
        fields = dict(
            visible_kind=self.visible_kind,
            graph=self.graph,
            weights=self.weights,
            visible_bias=self.visible_bias,
            hidden_bias=self.hidden_bias,
            sigma=self.sigma,
        )
        fields.update(changes)
        return BoltzmannMachine(**fields)

    def dense_weights(self):
        W = np.zeros((self.n_visible, self.n_hidden))
        W[self.graph.rows, self.graph.cols] = self.weights
        return W

    def dense_twin(self):
        """Same model on the complete mask, absent edges carrying weight 0."""
        return BoltzmannMachine.from_dense(
            self.visible_kind, self.dense_weights(), self.visible_bias,
            self.hidden_bias, self.sigma,
        )

    # linear maps over the sparse edge set
    def _scaled_visible(self, v):
        return v / self.sigma if self.is_gaussian else v

    def hidden_input(self, v):
        """``b_j + sum_{i in N(j)} x_i w_ij`` with ``x = v`` (binary) or
        ``v / sigma`` (Gaussian)."""
        x, _ = _batch(v, self.n_visible, "v")
        return self._hidden_drive(x) + self.hidden_bias

    def _hidden_drive(self, x):
        g = self.graph
        return kernels.edge_scatter(np.ascontiguousarray(self._scaled_visible(x)),
                                    g.rows, g.cols, self.weights, self.n_hidden)

    def visible_input(self, h):
        """``sum_{j in N(i)} h_j w_ij`` (no bias)."""
        y, _ = _batch(h, self.n_hidden, "h")
        g = self.graph
        return kernels.edge_scatter(y, g.cols, g.rows, self.weights, self.n_visible)

    # energies and conditionals
    def energy(self, v, h):
        x, single = _batch(v, self.n_visible, "v")
        y, _ = _batch(h, self.n_hidden, "h")
        if x.shape[0] != y.shape[0]:
            raise ParameterError("v and h batch sizes differ")
        inter = np.einsum("bj,bj->b", self._hidden_drive(x), y)
        hid = y @ self.hidden_bias
        if self.is_gaussian:
            vis = -(((x - self.visible_bias) ** 2) / (2 * self.sigma ** 2)).sum(axis=1)
        else:
            vis = x @ self.visible_bias
        e = -inter - vis - hid
        return e[0] if single else e

    def hidden_conditional(self, v):
        """``p(h_j = 1 | v)`` for every hidden unit."""
        x, single = _batch(v, self.n_visible, "v")
        p = expit(self.hidden_input(x))
        return p[0] if single else p

    def visible_mean(self, h):
        """Binary: ``p(v_i = 1 | h)``. Gaussian: conditional mean
        ``a_i + sigma_i * sum_j h_j w_ij``."""
        y, single = _batch(h, self.n_hidden, "h")
        inp = self.visible_input(y)
        if self.is_gaussian:
            m = self.visible_bias + self.sigma * inp
        else:
            m = expit(self.visible_bias + inp)
        return m[0] if single else m

    def visible_conditional(self, h):
        """Binary: probabilities. Gaussian: ``(mean, variance)``."""
        m = self.visible_mean(h)
        if self.is_gaussian:
            return m, np.broadcast_to(self.sigma ** 2, np.shape(m)).copy()
        return m

    def sample_hidden(self, v, rng):
        p = self.hidden_conditional(v)
        return (rng.random(np.shape(p)) < p).astype(np.float64)

    def sample_visible(self, h, rng):
        m = self.visible_mean(h)
        if self.is_gaussian:
            return m + self.sigma * rng.standard_normal(np.shape(m))
        return (rng.random(np.shape(m)) < m).astype(np.float64)

    def free_energy(self, v):
        """``F(v) = -log sum_h exp(-E(v, h))``."""
        x, single = _batch(v, self.n_visible, "v")
        hid = softplus(self.hidden_input(x)).sum(axis=1)
        if self.is_gaussian:
            vis = (((x - self.visible_bias) ** 2) / (2 * self.sigma ** 2)).sum(axis=1)
        else:
            vis = -(x @ self.visible_bias)
        f = vis - hid
        return f[0] if single else f

    def free_energy_grad(self, v):
        """Batch-mean derivatives of ``F`` w.r.t. ``(weights, visible_bias,
        hidden_bias)``."""
        x, _ = _batch(v, self.n_visible, "v")
        p = expit(self.hidden_input(x))
        s = self._scaled_visible(x)
        g = self.graph
        n = x.shape[0]
        d_w = -kernels.edge_outer(np.ascontiguousarray(s), p, g.rows, g.cols) / n
        if self.is_gaussian:
            d_a = -((x - self.visible_bias) / self.sigma ** 2).mean(axis=0)
        else:
            d_a = -x.mean(axis=0)
        d_b = -p.mean(axis=0)
        return d_w, d_a, d_b

    # persistence
    def to_arrays(self):
        arrays = {
            "model_format_version": np.array(MODEL_FORMAT_VERSION),
            "visible_kind": np.array(self.visible_kind),
            "weights": self.weights,
            "visible_bias": self.visible_bias,
            "hidden_bias": self.hidden_bias,
        }
        if self.sigma is not None:
            arrays["sigma"] = self.sigma
        arrays.update(self.graph.to_arrays())
        return arrays

    @classmethod
    def from_arrays(cls, arrays):
        version = int(arrays["model_format_version"])
        if version != MODEL_FORMAT_VERSION:
            raise FormatError(f"unsupported model format version {version}")
        graph = BipartiteGraph.from_arrays(arrays)
        return cls(
            str(arrays["visible_kind"]), graph, arrays["weights"],
            arrays["visible_bias"], arrays["hidden_bias"], arrays.get("sigma"),
        )

    def save(self, path, extra=None):
        arrays = self.to_arrays()
        if extra:
            arrays.update(extra)
        save_npz(path, arrays)

    @classmethod
    def load(cls, path):
        return cls.from_arrays(load_npz(path))

    def __repr__(self):
        return (f"BoltzmannMachine({self.visible_kind}, n_v={self.n_visible}, "
                f"n_h={self.n_hidden}, n_edges={self.graph.n_edges})")
