"""Reconstruction metrics, partition-function estimation and imputation."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.special import expit, logit, logsumexp

from .errors import ParameterError
from .models import BoltzmannMachine, softplus

EXACT_STATE_BUDGET = 24
EARTH_RADIUS_KM = 6371.0


# ---------------------------------------------------------------------------
# metrics


def rmse(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ParameterError(f"shape mismatch {x.shape} vs {y.shape}")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def pcc(x, y):
    """Pearson correlation over all entries, flattened."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ParameterError(f"shape mismatch {x.shape} vs {y.shape}")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0 or sy == 0:
        raise ParameterError("correlation undefined for a constant argument")
    r = float(xc @ yc) / (sx * sy)
    return max(-1.0, min(1.0, r))


def reconstruct(m, v):
    """Deterministic mean-field pass: hidden probabilities, then the visible
    conditional mean evaluated at those probabilities."""
    return m.visible_mean(m.hidden_conditional(v))


def haversine_km(lat1, lon1, lat2, lon2, radius=EARTH_RADIUS_KM):
    """Great-circle distance in kilometres between points given in degrees."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(a, dtype=np.float64))
                              for a in (lat1, lon1, lat2, lon2))
    s = (np.sin((lat2 - lat1) / 2) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2)
    return 2 * radius * np.arcsin(np.sqrt(np.clip(s, 0.0, 1.0)))


# ---------------------------------------------------------------------------
# partition function


def _all_binary(n):
    return np.array(list(itertools.product((0.0, 1.0), repeat=n))).reshape(-1, n)


def exact_log_z(m):
    """Exact ``log Z`` by enumeration.

    Binary models sum ``exp(-E(v, h))`` over every joint state
    (``n_v + n_h <= 24``). Gaussian models enumerate hidden states
    (``n_h <= 24``) and integrate the visible layer analytically.
    """
    if m.is_gaussian:
        if m.n_hidden > EXACT_STATE_BUDGET:
            raise ParameterError(f"n_h={m.n_hidden} exceeds the enumeration budget")
        H = _all_binary(m.n_hidden)
        c = m.visible_input(H)
        terms = H @ m.hidden_bias + (m.visible_bias * c / m.sigma + 0.5 * c ** 2).sum(axis=1)
        const = float(np.sum(np.log(np.sqrt(2 * np.pi) * m.sigma)))
        return float(logsumexp(terms)) + const
    if m.n_visible + m.n_hidden > EXACT_STATE_BUDGET:
        raise ParameterError(
            f"n_v + n_h = {m.n_visible + m.n_hidden} exceeds the enumeration budget")
    H = _all_binary(m.n_hidden)
    W = m.dense_weights()
    hb = H @ m.hidden_bias
    WH = W @ H.T  # (n_v, 2**n_h)
    parts = []
    chunk = max(1, (1 << 20) // max(H.shape[0], 1))
    for start in range(0, 1 << m.n_visible, chunk):
        idx = np.arange(start, min(start + chunk, 1 << m.n_visible))
        V = ((idx[:, None] >> np.arange(m.n_visible - 1, -1, -1)) & 1).astype(np.float64)
        neg_e = (V @ m.visible_bias)[:, None] + hb[None, :] + V @ WH
        parts.append(logsumexp(neg_e))
    return float(logsumexp(parts))


@dataclass(frozen=True)
class AISResult:
    log_z: float
    stderr: float
    log_z_base: float
    n_chains: int
    n_dropped: int
    log_weights: np.ndarray

    def interval(self, k=3.0):
        return self.log_z - k * self.stderr, self.log_z + k * self.stderr


def base_rate_bias(data, clip=0.001):
    """Visible biases of the zero-weight base model from data marginals."""
    p = np.clip(np.asarray(data, dtype=np.float64).mean(axis=0), clip, 1 - clip)
    return logit(p)


def ais_log_z(m, n_temps=1000, n_chains=100, rng=None, base_bias=None, data=None):
    """Annealed importance sampling estimate of ``log Z`` for a binary model.

    The base model has zero weights and zero hidden biases; its visible
    biases come from ``base_bias``, else from ``data`` marginals, else from
    the target's own visible biases. Intermediate distributions interpolate
    linearly in inverse temperature over ``n_temps`` uniformly spaced values
    in ``[0, 1]``; each transition is one Gibbs sweep. The estimate is
    ``log Z_base + log mean(w)`` with a delta-method standard error.
    """
    if m.is_gaussian:
        raise ParameterError("AIS is implemented for binary visible units only")
    if n_temps < 2 or n_chains < 1:
        raise ParameterError("need n_temps >= 2 and n_chains >= 1")
    rng = np.random.default_rng(rng)
    if base_bias is None:
        base_bias = base_rate_bias(data) if data is not None else m.visible_bias
    a0 = np.asarray(base_bias, dtype=np.float64)
    da = m.visible_bias - a0
    betas = np.linspace(0.0, 1.0, n_temps)
    log_z0 = float(softplus(a0).sum() + m.n_hidden * math.log(2.0))

    def log_f(v, beta):
        return v @ a0 + beta * (v @ da) + softplus(beta * m.hidden_input(v)).sum(axis=1)

    v = (rng.random((n_chains, m.n_visible)) < expit(a0)).astype(np.float64)
    log_w = np.zeros(n_chains)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n_temps):
            b_prev, b = betas[k - 1], betas[k]
            log_w += log_f(v, b) - log_f(v, b_prev)
            if k == n_temps - 1:
                break
            ph = expit(b * m.hidden_input(v))
            h = (rng.random(ph.shape) < ph).astype(np.float64)
            pv = expit(a0 + b * (da + m.visible_input(h)))
            v = (rng.random(pv.shape) < pv).astype(np.float64)
    finite = np.isfinite(log_w)
    kept = log_w[finite]
    if kept.size == 0:
        raise FloatingPointError("all AIS chains produced non-finite weights")
    log_mean = float(logsumexp(kept) - math.log(kept.size))
    w = np.exp(kept - kept.max())
    stderr = float(np.std(w, ddof=1) / (w.mean() * math.sqrt(kept.size))) if kept.size > 1 else float("inf")
    return AISResult(log_z0 + log_mean, stderr, log_z0, int(kept.size),
                     int((~finite).sum()), log_w)


def avg_log_prob(m, data, log_z):
    """Mean of ``-F(v) - log Z`` over the rows of ``data``."""
    return float(np.mean(-m.free_energy(data)) - log_z)


# ---------------------------------------------------------------------------
# imputation


def impute_visible(m, v_observed, missing_mask, gibbs_steps=200, rng=None, n_average=50):
    """Clamped Gibbs imputation of missing visible coordinates.

    Observed coordinates stay fixed; missing ones start at the visible bias
    and are resampled with all hidden units for ``gibbs_steps`` sweeps. The
    result is the average visible conditional mean over the last
    ``n_average`` sweeps, restricted to the missing coordinates (other
    entries are returned as observed).
    """
    v = np.array(np.atleast_2d(v_observed), dtype=np.float64)
    mask = np.broadcast_to(np.asarray(missing_mask, dtype=bool), v.shape)
    if not mask.any():
        raise ParameterError("missing_mask marks no coordinate")
    if mask.all(axis=1).any():
        raise ParameterError("every coordinate missing in some row; nothing to condition on")
    if n_average < 1 or gibbs_steps < n_average:
        raise ParameterError("need 1 <= n_average <= gibbs_steps")
    rng = np.random.default_rng(rng)
    v = np.where(mask, m.visible_bias, v)
    acc = np.zeros_like(v)
    for step in range(gibbs_steps):
        h = m.sample_hidden(v, rng)
        mean = m.visible_mean(h)
        if step >= gibbs_steps - n_average:
            acc += mean
        if m.is_gaussian:
            draw = mean + m.sigma * rng.standard_normal(mean.shape)
        else:
            draw = (rng.random(mean.shape) < mean).astype(np.float64)
        v = np.where(mask, draw, v)
    out = np.where(mask, acc / n_average, np.atleast_2d(v_observed))
    return out[0] if np.ndim(v_observed) == 1 else out


def geolocation_error_km(m, samples, lat_col, lon_col, raw_mean=None, raw_std=None,
                         gibbs_steps=200, rng=None, n_average=50):
    """Per-sample great-circle error of imputed (latitude, longitude).

    The two coordinate columns are hidden and imputed from the remaining
    features. When the model was trained on standardised data, pass the
    raw column means/stds so both truth and prediction are mapped back to
    degrees before measuring the distance.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    mask = np.zeros(x.shape[1], dtype=bool)
    mask[[lat_col, lon_col]] = True
    pred = impute_visible(m, x, mask, gibbs_steps, rng, n_average)
    if raw_mean is not None:
        scale = np.ones(x.shape[1]) if raw_std is None else np.where(np.asarray(raw_std) > 0,
                                                                     raw_std, 1.0)
        x = x * scale + raw_mean
        pred = pred * scale + raw_mean
    return haversine_km(x[:, lat_col], x[:, lon_col], pred[:, lat_col], pred[:, lon_col])


# ---------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    rmse: float = float("nan")
    pcc: float = float("nan")
    log_z_estimate: float = float("nan")
    log_z_stderr: float = float("nan")
    avg_train_logprob: float = float("nan")
    avg_test_logprob: float = float("nan")
    edge_count: int = 0
    avg_shortest_path: float = float("nan")
    clustering_coefficient: float = float("nan")
    pruning_iterations: int = 0
    model_family: str = ""
    visible_kind: str = ""
    dataset: str = ""
    cd_steps: int = 1
    n_hidden: int = 0
    dataset_hash: str = ""
    seed: int | None = None
    config_hash: str = ""

    def __post_init__(self):
        if not math.isnan(self.pcc) and not -1.0 <= self.pcc <= 1.0:
            raise ParameterError("pcc outside [-1, 1]")
        if not math.isnan(self.rmse) and self.rmse < 0:
            raise ParameterError("rmse must be non-negative")

    def to_json(self):
        d = asdict(self)
        d = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        names = {f.name: f for f in fields(cls)}
        kwargs = {}
        for k, v in d.items():
            if k not in names:
                continue
            if v is None and names[k].type in ("float", float):
                v = float("nan")
            kwargs[k] = v
        return cls(**kwargs)


def evaluate_model(m, train=None, test=None, *, ais=None, exact=False, rng=None,
                   family="", pruning_iterations=0, path_rng=None, dataset_hash="",
                   seed=None, config_hash=""):
    """Build an :class:`EvalReport`.

    Reconstruction metrics use ``test`` when given, else ``train``.
    Log-probabilities need a binary model and either ``exact=True`` (tiny
    models) or ``ais={"n_temps": ..., "n_chains": ...}``.
    """
    from .topology import bipartite_clustering_coefficient, shortest_path_stats

    report = EvalReport(
        edge_count=m.graph.n_edges,
        pruning_iterations=int(pruning_iterations),
        model_family=family,
        visible_kind=m.visible_kind,
        n_hidden=m.n_hidden,
        dataset_hash=dataset_hash,
        seed=seed,
        config_hash=config_hash,
    )
    report.avg_shortest_path = shortest_path_stats(m.graph, rng=path_rng).mean
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report.clustering_coefficient = bipartite_clustering_coefficient(m.graph)
    ref = test if test is not None else train
    if ref is not None and len(ref):
        rec = reconstruct(m, ref)
        report.rmse = rmse(ref, rec)
        try:
            report.pcc = pcc(ref, rec)
        except ParameterError:
            pass
    if exact or ais:
        if m.is_gaussian and not exact:
            raise ParameterError("AIS requested for a gaussian model")
        if exact:
            report.log_z_estimate = exact_log_z(m)
            report.log_z_stderr = 0.0
        else:
            res = ais_log_z(m, rng=rng, data=train, **ais)
            report.log_z_estimate = res.log_z
            report.log_z_stderr = res.stderr
        if train is not None:
            report.avg_train_logprob = avg_log_prob(m, train, report.log_z_estimate)
        if test is not None:
            report.avg_test_logprob = avg_log_prob(m, test, report.log_z_estimate)
    return report


__all__ = [
    "rmse", "pcc", "reconstruct", "haversine_km", "exact_log_z", "AISResult",
    "ais_log_z", "base_rate_bias", "avg_log_prob", "impute_visible", "geolocation_error_km",
    "EvalReport", "evaluate_model", "BoltzmannMachine",
]
