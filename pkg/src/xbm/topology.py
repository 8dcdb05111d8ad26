"""Scale-free, small-world bipartite topologies for sparse Boltzmann machines.

Generation runs in three stages: a power-law degree sequence is split
between the two layers and realised with a bipartite Havel-Hakimi
construction; Gaussian-local edges are then added around the diagonal of the
visible/hidden index space; the whole thing repeats until the average
shortest path drops below ``ln(n_v + n_h)``. A final permutation matches
high-degree visible nodes to high-variance data features.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .errors import ConstructionError, ParameterError, TopologyWarning, UnsupportedSizeError
from .graph import BipartiteGraph

NEIGHBOR_TRIALS = 10
EXACT_PATH_THRESHOLD = 2000
SAMPLED_PATH_SOURCES = 500


@dataclass(frozen=True)
class TopologyParams:
    gamma: float = 2.0
    k_min: int = 4
    sigma_neigh: float = 5.0
    phi: int = 5
    l_threshold: float | None = None  # None -> ln(n_v + n_h)
    max_outer_iterations: int = 20
    seed: int | None = None

    def __post_init__(self):
        if not self.gamma > 1:
            raise ParameterError(f"gamma must exceed 1, got {self.gamma}")
        if self.k_min < 1:
            raise ParameterError(f"k_min must be >= 1, got {self.k_min}")
        if self.phi < 0:
            raise ParameterError(f"phi must be >= 0, got {self.phi}")
        if not self.sigma_neigh > 0:
            raise ParameterError(f"sigma_neigh must be positive, got {self.sigma_neigh}")
        if self.max_outer_iterations < 1:
            raise ParameterError("max_outer_iterations must be >= 1")

    def threshold(self, n_v, n_h):
        if self.l_threshold is not None:
            return float(self.l_threshold)
        return math.log(n_v + n_h)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _as_rng(rng, seed=None):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(seed if rng is None else rng)


# ---------------------------------------------------------------------------
# degree sequences


def power_law_pmf(k_min, k_max, gamma):
    """Support and normalised mass of ``P(k) ∝ k**-gamma`` on
    ``{k_min, ..., k_max}``."""
    if k_min > k_max:
        raise ParameterError(f"empty support: k_min={k_min} > k_max={k_max}")
    ks = np.arange(k_min, k_max + 1, dtype=np.int64)
    w = ks.astype(np.float64) ** (-float(gamma))
    return ks, w / w.sum()


def sample_power_law_degrees(n, params, rng=None, k_max=None):
    """Draw ``n`` i.i.d. degrees from the truncated discrete power law and
    return them sorted in descending order.

    ``k_max`` defaults to ``n``.
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if not params.gamma > 1:
        raise ParameterError(f"gamma must exceed 1, got {params.gamma}")
    rng = _as_rng(rng, params.seed)
    k_max = n if k_max is None else int(k_max)
    ks, p = power_law_pmf(params.k_min, k_max, params.gamma)
    draws = rng.choice(ks, size=n, p=p)
    return np.sort(draws)[::-1].copy()


def distribute_proportionally(degrees, extra, caps=None):
    """Add ``extra`` units to ``degrees`` in proportion to their current
    values, largest-remainder rounding, ties to the lower index.

    With ``caps`` no entry exceeds its cap; overflow is re-spread over the
    entries that still have room. Returns ``(new_degrees, undistributed)``.
    """
    out = np.asarray(degrees, dtype=np.int64).copy()
    extra = int(extra)
    if extra < 0:
        raise ParameterError("extra must be non-negative")
    if caps is None:
        caps = np.full(out.shape, np.iinfo(np.int64).max // 4, dtype=np.int64)
    else:
        caps = np.broadcast_to(np.asarray(caps, dtype=np.int64), out.shape)
    while extra > 0:
        room = caps - out
        open_ = room > 0
        if not open_.any():
            break
        weights = np.where(open_, out, 0).astype(np.float64)
        if weights.sum() == 0:
            weights = open_.astype(np.float64)
        share = extra * weights / weights.sum()
        base = np.floor(share).astype(np.int64)
        short = extra - int(base.sum())
        if short:
            frac = share - base
            # largest remainder first; stable sort keeps lower index on ties
            order = np.argsort(-frac, kind="stable")
            order = order[open_[order]][:short]
            base[order] += 1
        add = np.minimum(base, room)
        out += add
        extra -= int(add.sum())
    return out, extra


def split_and_equalize(seq, n_v, n_h, strict=True):
    """Split a descending degree sequence between the two layers and equalise
    the degree sums.

    Entries alternate visible/hidden from the top until the smaller layer is
    full; the rest go to the larger layer. The layer with the smaller sum then
    receives the difference in proportion to its degrees. ``strict`` enforces
    the generator's ``n_v > 4`` and ``n_h > 4`` requirement.
    """
    seq = np.asarray(seq, dtype=np.int64)
    if strict and (n_v <= 4 or n_h <= 4):
        raise UnsupportedSizeError(f"need n_v > 4 and n_h > 4, got {n_v}x{n_h}")
    if seq.shape != (n_v + n_h,):
        raise ParameterError(f"sequence length {seq.size} != n_v + n_h = {n_v + n_h}")
    m = min(n_v, n_h)
    s_v = list(seq[0:2 * m:2])
    s_h = list(seq[1:2 * m:2])
    if n_v > n_h:
        s_v.extend(seq[2 * m:])
    else:
        s_h.extend(seq[2 * m:])
    s_v = np.array(s_v, dtype=np.int64)
    s_h = np.array(s_h, dtype=np.int64)
    diff = int(s_h.sum() - s_v.sum())
    if diff > 0:
        s_v, _ = distribute_proportionally(s_v, diff)
    elif diff < 0:
        s_h, _ = distribute_proportionally(s_h, -diff)
    return np.sort(s_v)[::-1].copy(), np.sort(s_h)[::-1].copy()


def cap_and_balance(s_v, s_h, k_min=1):
    """Clamp each layer's degrees to the opposite layer's size, then restore
    equal sums: the short side grows proportionally within its caps and, if it
    runs out of room, the long side's largest degrees shrink (not below
    ``k_min``)."""
    n_v, n_h = len(s_v), len(s_h)
    s_v = np.minimum(np.asarray(s_v, dtype=np.int64), n_h)
    s_h = np.minimum(np.asarray(s_h, dtype=np.int64), n_v)
    for _ in range(2):
        diff = int(s_h.sum() - s_v.sum())
        if diff > 0:
            s_v, left = distribute_proportionally(s_v, diff, caps=n_h)
            s_h = _shrink_largest(s_h, left, k_min)
        elif diff < 0:
            s_h, left = distribute_proportionally(s_h, -diff, caps=n_v)
            s_v = _shrink_largest(s_v, left, k_min)
    if s_v.sum() != s_h.sum():
        raise ConstructionError("cannot balance degree sums within layer capacities")
    return np.sort(s_v)[::-1].copy(), np.sort(s_h)[::-1].copy()


def _shrink_largest(seq, amount, floor):
    seq = seq.copy()
    floor = max(1, int(floor))
    for _ in range(int(amount)):
        k = int(np.argmax(seq))
        if seq[k] <= floor:
            floor = 1
            if seq[k] <= 1:
                break
        seq[k] -= 1
    return seq


def is_bigraphic(s_v, s_h):
    """Gale-Ryser test for a pair of degree sequences."""
    a = np.sort(np.asarray(s_v, dtype=np.int64))[::-1]
    b = np.sort(np.asarray(s_h, dtype=np.int64))
    if a.sum() != b.sum() or (a.size and a.min() < 0) or (b.size and b.min() < 0):
        return False
    if a.size == 0:
        return True
    ks = np.arange(1, a.size + 1)
    # sum_j min(b_j, k) via the sorted b and its prefix sums
    prefix = np.concatenate([[0], np.cumsum(b)])
    pos = np.searchsorted(b, ks, side="left")
    rhs = prefix[pos] + ks * (b.size - pos)
    return bool(np.all(np.cumsum(a) <= rhs))


def repair_bigraphic(s_v, s_h, k_min=1):
    """Decrement the largest degree on each side in tandem until the pair is
    bigraphic. Raises :class:`ConstructionError` if no entry above ``k_min``
    remains."""
    s_v = np.sort(np.asarray(s_v, dtype=np.int64))[::-1].copy()
    s_h = np.sort(np.asarray(s_h, dtype=np.int64))[::-1].copy()
    while not is_bigraphic(s_v, s_h):
        if s_v[0] <= k_min or s_h[0] <= k_min:
            raise ConstructionError(
                f"degree pair not bigraphic and cannot shrink below k_min={k_min}"
            )
        s_v[0] -= 1
        s_h[0] -= 1
        s_v = np.sort(s_v)[::-1]
        s_h = np.sort(s_h)[::-1]
    return s_v.copy(), s_h.copy()


def havel_hakimi_bipartite(s_v, s_h):
    """Realise ``(s_v, s_h)`` as a simple bipartite graph.

    Visible node ``i`` gets degree ``s_v[i]`` and hidden node ``j`` degree
    ``s_h[j]``. Visible nodes are processed by descending degree; each is
    joined to the hidden nodes with the largest remaining degree (lower index
    on ties).
    """
    s_v = np.asarray(s_v, dtype=np.int64)
    s_h = np.asarray(s_h, dtype=np.int64)
    n_v, n_h = s_v.size, s_h.size
    if s_v.sum() != s_h.sum():
        raise ConstructionError(f"degree sums differ: {s_v.sum()} vs {s_h.sum()}")
    if (s_v.size and s_v.max() > n_h) or (s_h.size and s_h.max() > n_v):
        raise ConstructionError("a degree exceeds the opposite layer size")
    if not is_bigraphic(s_v, s_h):
        raise ConstructionError(
            f"degree pair is not bigraphic (Gale-Ryser fails); "
            f"max visible {s_v.max()}, max hidden {s_h.max()}"
        )
    remaining = s_h.copy()
    idx = np.arange(n_h, dtype=np.int64)
    rows, cols = [], []
    for i in np.argsort(-s_v, kind="stable"):
        d = int(s_v[i])
        if d == 0:
            continue
        order = np.argsort(-remaining, kind="stable")[:d]
        if remaining[order[-1]] <= 0:
            raise ConstructionError(f"ran out of hidden stubs at visible node {i}")
        remaining[order] -= 1
        rows.append(np.full(d, i, dtype=np.int64))
        cols.append(idx[order])
    if not rows:
        return BipartiteGraph(n_v, n_h, [], [])
    return BipartiteGraph(n_v, n_h, np.concatenate(rows), np.concatenate(cols))


def add_neighborhood_edges(g, params, rng=None):
    """Add Gaussian-local edges around the index diagonal.

    In each of ``phi`` passes every visible node ``i`` (1-based) draws a
    hidden index ``ceil(N(i * n_h / n_v, sigma_neigh))``; the first draw
    inside ``[1, n_h]`` is joined to ``i`` (no-op if already present).
    Hidden nodes do the same towards the visible layer. A node whose
    ``NEIGHBOR_TRIALS`` draws all fall outside the range is skipped.
    """
    rng = _as_rng(rng, params.seed)
    n_v, n_h = g.n_v, g.n_h
    new_rows, new_cols = [], []
    vis = np.arange(1, n_v + 1)
    hid = np.arange(1, n_h + 1)
    for _ in range(params.phi):
        j, ok = _local_draws(vis * n_h / n_v, params.sigma_neigh, n_h, rng)
        new_rows.append(vis[ok] - 1)
        new_cols.append(j[ok] - 1)
        i, ok = _local_draws(hid * n_v / n_h, params.sigma_neigh, n_v, rng)
        new_rows.append(i[ok] - 1)
        new_cols.append(hid[ok] - 1)
    if not new_rows:
        return g
    return g.add_edges(np.concatenate(new_rows), np.concatenate(new_cols))


def _local_draws(centers, sigma, upper, rng):
    draws = np.ceil(rng.normal(centers[:, None], sigma, size=(centers.size, NEIGHBOR_TRIALS)))
    valid = (draws >= 1) & (draws <= upper)
    ok = valid.any(axis=1)
    first = np.argmax(valid, axis=1)
    picked = draws[np.arange(centers.size), first].astype(np.int64)
    return picked, ok


# ---------------------------------------------------------------------------
# graph metrics


@dataclass(frozen=True)
class PathStats:
    mean: float
    diameter: int
    connected: bool
    exact: bool
    n_pairs: int


def shortest_path_stats(g, rng=None, exact_threshold=EXACT_PATH_THRESHOLD,
                        n_sources=SAMPLED_PATH_SOURCES):
    """Average BFS distance over node pairs.

    Exact all-pairs when ``n_v + n_h <= exact_threshold``; otherwise BFS from
    ``n_sources`` uniformly sampled sources. Unreachable pairs are excluded
    and reported through ``connected``.
    """
    n = g.n_v + g.n_h
    indptr, indices = g.unified_adjacency()
    if n <= exact_threshold:
        sources = np.arange(n, dtype=np.int64)
        exact = True
    else:
        rng = _as_rng(rng, 0)
        sources = np.sort(rng.choice(n, size=min(n_sources, n), replace=False)).astype(np.int64)
        exact = False
    total, pairs, maxd = kernels.bfs_distance_stats(indptr, indices, sources)
    expected = len(sources) * (n - 1)
    mean = total / pairs if pairs else float("nan")
    return PathStats(mean=mean, diameter=maxd, connected=pairs == expected,
                     exact=exact, n_pairs=pairs)


def average_shortest_path(g, rng=None, **kwargs):
    stats = shortest_path_stats(g, rng=rng, **kwargs)
    if not stats.connected:
        warnings.warn("graph is disconnected; averaging over reachable pairs only",
                      TopologyWarning, stacklevel=2)
    return stats.mean


def node_clustering(g):
    """Latapy clustering per node (visible first, then hidden); NaN for nodes
    without a distance-2 neighbour."""
    indptr, indices = g.unified_adjacency()
    return kernels.latapy_node_clustering(indptr, indices)


def bipartite_clustering_coefficient(g):
    """Mean Latapy pairwise-overlap clustering over nodes that have at least
    one same-layer node at distance 2. Defined as 0 (with a warning) when no
    node does."""
    cc = node_clustering(g)
    cc = cc[~np.isnan(cc)]
    if cc.size == 0:
        warnings.warn("no distance-2 pairs; clustering coefficient set to 0",
                      TopologyWarning, stacklevel=2)
        return 0.0
    return float(cc.mean())


def degree_histogram(degrees):
    """``(degree, count)`` pairs for non-zero counts, ascending degree."""
    counts = np.bincount(np.asarray(degrees, dtype=np.int64))
    ks = np.nonzero(counts)[0]
    return ks, counts[ks]


def loglog_degree_slope(degrees, k_min, k_max):
    """Least-squares slope of log(frequency) on log(degree) over observed
    degrees in ``[k_min, k_max]``."""
    ks, counts = degree_histogram(degrees)
    sel = (ks >= k_min) & (ks <= k_max)
    if sel.sum() < 2:
        raise ParameterError("need at least two distinct degrees in range")
    x = np.log(ks[sel])
    y = np.log(counts[sel] / counts.sum())
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


# ---------------------------------------------------------------------------
# full generator


@dataclass
class TopologyResult:
    graph: BipartiteGraph
    iterations: int
    avg_shortest_path: float
    threshold: float
    connected: bool
    warning: bool

    @property
    def edge_ratio(self):
        return self.graph.n_v * self.graph.n_h / self.graph.n_edges


def sample_degree_pair(n_v, n_h, params, rng):
    """Sample, split, equalise, cap and repair until a bigraphic pair comes
    out."""
    for _ in range(100):
        seq = sample_power_law_degrees(n_v + n_h, params, rng)
        s_v, s_h = split_and_equalize(seq, n_v, n_h)
        try:
            s_v, s_h = cap_and_balance(s_v, s_h, params.k_min)
            return repair_bigraphic(s_v, s_h, params.k_min)
        except ConstructionError:
            continue
    raise ConstructionError(f"no bigraphic degree pair found for {n_v}x{n_h} after 100 draws")


def generate_topology(n_v, n_h, params=None, rng=None):
    """Generate a scale-free, small-world bipartite graph.

    Repeats degree sampling, Havel-Hakimi construction and neighbourhood
    augmentation until the average shortest path is at most the threshold,
    or ``max_outer_iterations`` is hit; then the best graph seen is returned
    with ``warning=True`` and a :class:`TopologyWarning` is issued.
    """
    params = params or TopologyParams()
    if n_v <= 4 or n_h <= 4:
        raise UnsupportedSizeError(f"need n_v > 4 and n_h > 4, got {n_v}x{n_h}")
    rng = _as_rng(rng, params.seed)
    threshold = params.threshold(n_v, n_h)
    best = None
    for it in range(1, params.max_outer_iterations + 1):
        s_v, s_h = sample_degree_pair(n_v, n_h, params, rng)
        g = havel_hakimi_bipartite(s_v, s_h)
        g = add_neighborhood_edges(g, params, rng)
        stats = shortest_path_stats(g, rng=rng)
        if best is None or stats.mean < best[1].mean:
            best = (g, stats, it)
        if stats.mean <= threshold:
            return TopologyResult(g, it, stats.mean, threshold, stats.connected, False)
    g, stats, _ = best
    warnings.warn(
        f"average shortest path {stats.mean:.3f} above {threshold:.3f} after "
        f"{params.max_outer_iterations} iterations; returning best graph",
        TopologyWarning, stacklevel=2,
    )
    return TopologyResult(g, params.max_outer_iterations, stats.mean, threshold,
                          stats.connected, True)


def fit_to_data(g, feature_std):
    """Permutation ``perm`` sending visible slot ``s`` to data feature
    ``perm[s]`` so that degree rank matches standard-deviation rank.

    Nodes are ranked by (degree desc, index asc) and features by (std desc,
    index asc). Within a block of features with equal std, the nodes assigned
    to the block are matched in ascending index order, so uninformative
    (constant) std leaves the identity.
    """
    feature_std = np.asarray(feature_std, dtype=np.float64)
    if feature_std.shape != (g.n_v,):
        raise ParameterError(f"feature_std has length {feature_std.size}, expected {g.n_v}")
    if np.any(feature_std < 0) or np.any(~np.isfinite(feature_std)):
        raise ParameterError("feature_std entries must be finite and >= 0")
    deg = g.visible_degrees()
    idx = np.arange(g.n_v)
    node_order = np.lexsort((idx, -deg))
    feat_order = np.lexsort((idx, -feature_std))
    perm = np.empty(g.n_v, dtype=np.int64)
    start = 0
    while start < g.n_v:
        stop = start + 1
        while stop < g.n_v and feature_std[feat_order[stop]] == feature_std[feat_order[start]]:
            stop += 1
        nodes = np.sort(node_order[start:stop])
        feats = np.sort(feat_order[start:stop])
        perm[nodes] = feats
        start = stop
    return perm
