"""Contrastive-divergence training and the sparse baselines.

Updates follow momentum SGD with weight decay on the weights only::

    velocity <- rho * velocity + alpha * (grad - xi * param)
    param    <- param + velocity

Gradients ascend the log-likelihood. Two sparse baselines are built here:
fixed-probability (Erdos-Renyi) masks and iterative magnitude pruning
(train, prune, retrain).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._io import load_npz
from .errors import ParameterError, TrainingDivergence
from .evaluation import pcc, reconstruct, rmse
from .graph import BipartiteGraph
from .models import BoltzmannMachine

NEGATIVE_VISIBLE = ("auto", "sample", "mean")


# ---------------------------------------------------------------------------
# schedules


@dataclass(frozen=True)
class InverseTimeDecay:
    """``alpha_t = initial / (1 + t / half_life)``; ``half_life=None`` means
    half the total number of updates."""

    initial: float = 0.05
    half_life: float | None = None

    def __call__(self, update, total_updates):
        half = self.half_life if self.half_life is not None else max(total_updates / 2, 1.0)
        return self.initial / (1.0 + update / half)

    def to_dict(self):
        return {"type": "inverse_time", "initial": self.initial, "half_life": self.half_life}


@dataclass(frozen=True)
class LinearCDRamp:
    """CD steps rising from ``start`` to ``stop`` in equal epoch blocks."""

    start: int = 1
    stop: int = 25

    def __call__(self, epoch, epochs):
        levels = self.stop - self.start + 1
        block = min(levels - 1, epoch * levels // max(epochs, 1))
        return self.start + block

    def to_dict(self):
        return {"type": "linear_ramp", "start": self.start, "stop": self.stop}


def _schedule_from(obj):
    if isinstance(obj, dict):
        kind = obj.get("type")
        args = {k: v for k, v in obj.items() if k != "type"}
        if kind == "inverse_time":
            return InverseTimeDecay(**args)
        if kind == "linear_ramp":
            return LinearCDRamp(**args)
        raise ParameterError(f"unknown schedule type {kind!r}")
    return obj


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float | InverseTimeDecay = 0.001
    momentum: float = 0.5
    weight_decay: float = 0.0002
    cd_steps: int | LinearCDRamp = 1
    epochs: int = 100
    batch_size: int = 100
    seed: int = 0
    negative_visible: str = "auto"

    def __post_init__(self):
        lr = self.learning_rate
        if not callable(lr) and not lr > 0:
            raise ParameterError(f"learning_rate must be positive, got {lr}")
        if not 0 <= self.momentum < 1:
            raise ParameterError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ParameterError("weight_decay must be >= 0")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ParameterError("epochs must be >= 0")
        if not callable(self.cd_steps) and self.cd_steps < 1:
            raise ParameterError("cd_steps must be >= 1")
        if self.negative_visible not in NEGATIVE_VISIBLE:
            raise ParameterError(f"negative_visible must be one of {NEGATIVE_VISIBLE}")

    def lr_at(self, update, total_updates):
        lr = self.learning_rate
        return lr(update, total_updates) if callable(lr) else float(lr)

    def cd_at(self, epoch):
        n = self.cd_steps
        return int(n(epoch, self.epochs)) if callable(n) else int(n)

    def to_dict(self):
        d = dict(self.__dict__)
        for key in ("learning_rate", "cd_steps"):
            if hasattr(d[key], "to_dict"):
                d[key] = d[key].to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("learning_rate", "cd_steps"):
            if key in d:
                d[key] = _schedule_from(d[key])
        return cls(**d)


# ---------------------------------------------------------------------------
# gradients and updates


@dataclass
class GradientSet:
    d_weights: np.ndarray
    d_a: np.ndarray
    d_b: np.ndarray

    @classmethod
    def zeros_like(cls, m):
        return cls(np.zeros(m.graph.n_edges), np.zeros(m.n_visible), np.zeros(m.n_hidden))

    def as_tuple(self):
        return self.d_weights, self.d_a, self.d_b


def cd_gradients(m, batch, n, rng, negative_visible="auto"):
    """CD-n estimate of the log-likelihood gradient, batch-averaged.

    The positive phase uses data-clamped hidden probabilities. The chain runs
    ``n`` alternating Gibbs steps from the data on sampled states; the
    negative statistics pair the final visible state with hidden
    probabilities. ``negative_visible`` picks that final visible state:
    ``"sample"`` draws it (unbiased as ``n`` grows), ``"mean"`` uses the
    noise-free conditional mean; ``"auto"`` samples binary units and uses the
    mean for Gaussian units.
    """
    if negative_visible not in NEGATIVE_VISIBLE:
        raise ParameterError(f"negative_visible must be one of {NEGATIVE_VISIBLE}")
    use_mean = negative_visible == "mean" or (negative_visible == "auto" and m.is_gaussian)
    if n < 1:
        raise ParameterError(f"CD steps must be >= 1, got {n}")
    v0 = np.ascontiguousarray(np.atleast_2d(np.asarray(batch, dtype=np.float64)))
    if v0.shape[0] == 0:
        raise ParameterError("empty batch")
    ph0 = m.hidden_conditional(v0)
    h = (rng.random(ph0.shape) < ph0).astype(np.float64)
    for step in range(n):
        last = step == n - 1
        vn = m.visible_mean(h) if (last and use_mean) else m.sample_visible(h, rng)
        phn = m.hidden_conditional(vn)
        if not last:
            h = (rng.random(phn.shape) < phn).astype(np.float64)
    g = m.graph
    scale = 1.0 / v0.shape[0]
    s0 = m._scaled_visible(v0)
    sn = m._scaled_visible(vn)
    pos = kernels.edge_outer(np.ascontiguousarray(s0), ph0, g.rows, g.cols)
    neg = kernels.edge_outer(np.ascontiguousarray(sn), phn, g.rows, g.cols)
    d_w = (pos - neg) * scale
    d_a = v0.mean(axis=0) - vn.mean(axis=0)
    if m.is_gaussian:
        d_a = d_a / m.sigma ** 2
    d_b = ph0.mean(axis=0) - phn.mean(axis=0)
    return GradientSet(d_w, d_a, d_b)


def apply_update(m, grads, velocity, cfg, lr=None):
    """One momentum step. Weight decay applies to weights only. Returns
    ``(new_model, new_velocity)``."""
    alpha = cfg.lr_at(0, 1) if lr is None else lr
    rho = cfg.momentum
    xi = cfg.weight_decay
    vw = rho * velocity.d_weights + alpha * (grads.d_weights - xi * m.weights)
    va = rho * velocity.d_a + alpha * grads.d_a
    vb = rho * velocity.d_b + alpha * grads.d_b
    new = m.copy(
        weights=m.weights + vw,
        visible_bias=m.visible_bias + va,
        hidden_bias=m.hidden_bias + vb,
    )
    return new, GradientSet(vw, va, vb)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    model: BoltzmannMachine
    velocity: GradientSet
    trace: list = field(default_factory=list)
    updates: int = 0
    epochs: int = 0


def _split_dataset(dataset):
    """``(train_samples, test_samples_or_None, kind)`` for a Dataset or a
    bare array."""
    samples = getattr(dataset, "samples", None)
    if samples is None:
        return np.asarray(dataset, dtype=np.float64), None, None
    train_idx = getattr(dataset, "train_idx", None)
    test_idx = getattr(dataset, "test_idx", None)
    train = samples if train_idx is None else samples[train_idx]
    test = None if test_idx is None or len(test_idx) == 0 else samples[test_idx]
    return train, test, dataset.kind


def _check_kind(m, kind, x):
    if kind is not None:
        want = "binary" if m.visible_kind == "binary" else "real"
        if kind != want:
            raise ParameterError(f"{kind} data cannot train a {m.visible_kind} model")
    if x.ndim != 2 or x.shape[1] != m.n_visible:
        raise ParameterError(f"data must have {m.n_visible} columns, got shape {x.shape}")
    if m.visible_kind == "binary" and not np.all((x == 0) | (x == 1)):
        raise ParameterError("binary model requires {0,1} data")


def _epoch_metrics(m, train, test):
    row = {}
    rec = reconstruct(m, train)
    row["train_rmse"] = rmse(train, rec)
    row["train_pcc"] = _safe_pcc(train, rec)
    if test is not None:
        rec = reconstruct(m, test)
        row["test_rmse"] = rmse(test, rec)
        row["test_pcc"] = _safe_pcc(test, rec)
    return row


def _safe_pcc(x, y):
    try:
        return pcc(x, y)
    except ParameterError:
        return float("nan")


def train(m, dataset, cfg, rng=None, track_metrics=True, velocity=None):
    """Shuffled mini-batch CD training.

    ``dataset`` is a :class:`~xbm.data.Dataset` (its train split is used for
    updates, its test split only for metrics) or a plain sample matrix.
    Returns a :class:`TrainResult` whose ``trace`` holds one metrics row per
    epoch.
    """
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    train_x, test_x, kind = _split_dataset(dataset)
    _check_kind(m, kind, train_x)
    velocity = GradientSet.zeros_like(m) if velocity is None else velocity
    n = train_x.shape[0]
    per_epoch = math.ceil(n / cfg.batch_size)
    total = per_epoch * cfg.epochs
    update = 0
    trace = []
    for epoch in range(cfg.epochs):
        steps = cfg.cd_at(epoch)
        order = rng.permutation(n)
        lr = cfg.lr_at(update, total)
        for start in range(0, n, cfg.batch_size):
            batch = train_x[order[start:start + cfg.batch_size]]
            lr = cfg.lr_at(update, total)
            grads = cd_gradients(m, batch, steps, rng, cfg.negative_visible)
            m, velocity = apply_update(m, grads, velocity, cfg, lr=lr)
            update += 1
        if not (np.all(np.isfinite(m.weights)) and np.all(np.isfinite(m.visible_bias))
                and np.all(np.isfinite(m.hidden_bias))):
            raise TrainingDivergence(f"non-finite parameters after epoch {epoch + 1}")
        row = {"epoch": epoch + 1, "cd_steps": steps, "learning_rate": lr}
        if track_metrics:
            row.update(_epoch_metrics(m, train_x, test_x))
        trace.append(row)
    return TrainResult(m, velocity, trace, update, cfg.epochs)


# ---------------------------------------------------------------------------
# sparse baselines


def make_fixprob_mask(n_v, n_h, target_edges, rng=None):
    """Each of the ``n_v * n_h`` possible edges is kept independently with
    probability ``target_edges / (n_v * n_h)``. Isolated units can occur."""
    total = n_v * n_h
    if not 0 < target_edges <= total:
        raise ParameterError(f"target_edges must be in (0, {total}], got {target_edges}")
    rng = np.random.default_rng(rng)
    p = target_edges / total
    return BipartiteGraph.from_mask(rng.random((n_v, n_h)) < p)


@dataclass
class PruneResult:
    model: BoltzmannMachine
    iterations: int
    reached: bool
    trace: list
    log: list


def train_prune_train(m_dense, dataset, cfg, target_edges, max_prune_iters=50,
                      prune_fraction=0.2, rng=None):
    """Iterative magnitude pruning.

    Train once; then repeatedly drop the smallest-magnitude
    ``prune_fraction`` of the remaining weights (never going below
    ``target_edges``) and retrain, until the target is met or
    ``max_prune_iters`` pruning rounds have run. Weight decay acts as the L2
    term. ``log[k]`` records the edges removed in round ``k + 1`` together
    with the magnitudes they had when pruned.
    """
    if target_edges < 1:
        raise ParameterError("target_edges must be >= 1")
    if target_edges > m_dense.graph.n_edges:
        raise ParameterError("target_edges exceeds the current edge count")
    if not 0 < prune_fraction < 1:
        raise ParameterError("prune_fraction must be in (0, 1)")
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    res = train(m_dense, dataset, cfg, rng)
    m = res.model
    trace = [{"iteration": 0, "n_edges": m.graph.n_edges, **(res.trace[-1] if res.trace else {})}]
    log = []
    it = 0
    while m.graph.n_edges > target_edges and it < max_prune_iters:
        it += 1
        n_e = m.graph.n_edges
        k = max(1, min(math.ceil(prune_fraction * n_e), n_e - target_edges))
        mag = np.abs(m.weights)
        order = np.lexsort((np.arange(n_e), mag))
        drop = order[:k]
        keep = np.ones(n_e, dtype=bool)
        keep[drop] = False
        log.append({
            "iteration": it,
            "rows": m.graph.rows[drop].copy(),
            "cols": m.graph.cols[drop].copy(),
            "magnitudes": mag[drop].copy(),
            "kept_min_magnitude": float(mag[keep].min()) if keep.any() else float("nan"),
        })
        m = m.copy(graph=m.graph.keep_edges(keep), weights=m.weights[keep])
        res = train(m, dataset, cfg, rng)
        m = res.model
        trace.append({"iteration": it, "n_edges": m.graph.n_edges,
                      **(res.trace[-1] if res.trace else {})})
    return PruneResult(m, it, m.graph.n_edges <= target_edges, trace, log)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model, velocity=None, epoch=0, meta=None):
    """Model arrays plus optimiser velocity, epoch counter and a JSON
    metadata string."""
    extra = {"checkpoint_epoch": np.array(int(epoch))}
    if velocity is not None:
        extra.update({
            "velocity_weights": velocity.d_weights,
            "velocity_visible": velocity.d_a,
            "velocity_hidden": velocity.d_b,
        })
    if meta is not None:
        extra["meta_json"] = np.array(json.dumps(meta, sort_keys=True, default=str))
    model.save(path, extra)


def load_checkpoint(path):
    """Returns ``(model, velocity_or_None, epoch, meta_dict)``."""
    arrays = load_npz(path)
    model = BoltzmannMachine.from_arrays(arrays)
    velocity = None
    if "velocity_weights" in arrays:
        velocity = GradientSet(arrays["velocity_weights"], arrays["velocity_visible"],
                               arrays["velocity_hidden"])
    epoch = int(arrays.get("checkpoint_epoch", 0))
    meta = json.loads(str(arrays["meta_json"])) if "meta_json" in arrays else {}
    return model, velocity, epoch, meta


__all__ = [
    "TrainConfig", "InverseTimeDecay", "LinearCDRamp", "GradientSet",
    "cd_gradients", "apply_update", "train", "TrainResult",
    "make_fixprob_mask", "train_prune_train", "PruneResult",
    "save_checkpoint", "load_checkpoint",
]
