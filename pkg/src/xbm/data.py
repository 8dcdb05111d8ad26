"""Datasets: IDX and CSV loaders, synthetic data, normalisation and splits.

A :class:`Dataset` is immutable after construction. Its ``sha256`` field is
the SHA-256 of the source bytes for loaded files and of the sample matrix
(little-endian float64, row-major, prefixed by its shape) otherwise.
"""
from __future__ import annotations

import csv
import gzip
import hashlib
import io
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FormatError, ParameterError

BINARY = "binary"
REAL = "real"
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
MAX_IDX_ELEMENTS = 1 << 34


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def array_hash(samples):
    x = np.ascontiguousarray(samples, dtype="<f8")
    h = hashlib.sha256(np.asarray(x.shape, dtype="<i8").tobytes())
    h.update(x.tobytes())
    return h.hexdigest()


@dataclass(frozen=True, eq=False)
class Dataset:
    samples: np.ndarray
    kind: str
    feature_mean: np.ndarray = None
    feature_std: np.ndarray = None
    train_idx: np.ndarray = None
    test_idx: np.ndarray = None
    folds: np.ndarray = None
    labels: np.ndarray = None
    source: str = ""
    sha256: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 2:
            raise ParameterError(f"samples must be a 2-D matrix, got shape {x.shape}")
        if self.kind not in (BINARY, REAL):
            raise ParameterError(f"kind must be 'binary' or 'real', got {self.kind!r}")
        if self.kind == BINARY and not np.all((x == 0) | (x == 1)):
            raise ParameterError("binary dataset has entries outside {0, 1}")
        set_ = object.__setattr__
        set_(self, "samples", _readonly(x))
        if self.feature_mean is None:
            set_(self, "feature_mean", _readonly(x.mean(axis=0) if len(x) else np.zeros(x.shape[1])))
        if self.feature_std is None:
            set_(self, "feature_std", _readonly(x.std(axis=0) if len(x) else np.zeros(x.shape[1])))
        if self.train_idx is None:
            set_(self, "train_idx", _readonly(np.arange(len(x), dtype=np.int64)))
        if self.test_idx is None:
            set_(self, "test_idx", _readonly(np.zeros(0, dtype=np.int64)))
        if not self.sha256:
            set_(self, "sha256", array_hash(x))

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def n_features(self):
        return self.samples.shape[1]

    def __len__(self):
        return self.n_samples

    @property
    def train(self):
        return self.samples[self.train_idx]

    @property
    def test(self):
        return self.samples[self.test_idx]

    def with_split(self, train_idx, test_idx):
        train_idx = np.asarray(train_idx, dtype=np.int64)
        test_idx = np.asarray(test_idx, dtype=np.int64)
        if np.intersect1d(train_idx, test_idx).size:
            raise ParameterError("train and test indices overlap")
        return replace(self, train_idx=_readonly(train_idx), test_idx=_readonly(test_idx))

    def fold_split(self, fold):
        """Train/test split holding out fold ``fold`` of ``self.folds``."""
        if self.folds is None:
            raise ParameterError("dataset has no fold assignment")
        test = np.flatnonzero(self.folds == fold)
        train = np.flatnonzero(self.folds != fold)
        return self.with_split(train, test)

    def subset(self, n, rng=None):
        """The first ``n`` samples (or ``n`` seeded random ones), no split."""
        if not 0 < n <= self.n_samples:
            raise ParameterError(f"n must be in [1, {self.n_samples}]")
        idx = np.arange(n) if rng is None else np.sort(
            np.random.default_rng(rng).choice(self.n_samples, n, replace=False))
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.samples[idx], self.kind, labels=labels,
                       source=f"{self.source}[subset {n}]")


def random_split(n, train_fraction, rng=None):
    if not 0 < train_fraction <= 1:
        raise ParameterError("train_fraction must be in (0, 1]")
    perm = np.random.default_rng(rng).permutation(n)
    k = int(round(train_fraction * n))
    return np.sort(perm[:k]), np.sort(perm[k:])


def synthetic_gaussian(n_samples, n_features, rng=None, train_fraction=0.7):
    """I.i.d. standard normal samples, real kind, seeded 70/30 split."""
    if n_samples < 1 or n_features < 1:
        raise ParameterError("sizes must be positive")
    rng = np.random.default_rng(rng)
    x = rng.standard_normal((n_samples, n_features))
    train, test = random_split(n_samples, train_fraction, rng)
    return Dataset(x, REAL, train_idx=train, test_idx=test, source="synthetic_gaussian")


def synthetic_binary(n_samples, n_features, rng=None, p=None, train_fraction=1.0):
    """Independent Bernoulli columns with per-column rates ``p`` (uniform
    in [0.1, 0.9] when omitted)."""
    rng = np.random.default_rng(rng)
    if p is None:
        p = rng.uniform(0.1, 0.9, size=n_features)
    x = (rng.random((n_samples, n_features)) < p).astype(np.float64)
    train, test = random_split(n_samples, train_fraction, rng)
    return Dataset(x, BINARY, train_idx=train, test_idx=test, source="synthetic_binary")


# ---------------------------------------------------------------------------
# IDX


def _read_bytes(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise FormatError(f"corrupt gzip stream in {path}: {exc}", 0) from exc
    return raw


def parse_idx(raw):
    """Decode an unsigned-byte IDX container into an ndarray."""
    if len(raw) < 4:
        raise FormatError("truncated IDX header", len(raw))
    magic = int.from_bytes(raw[:4], "big")
    if magic not in (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC):
        raise FormatError(f"bad IDX magic 0x{magic:08x}", 0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError("truncated IDX dimension block", len(raw))
    dims = [int.from_bytes(raw[4 + 4 * k:8 + 4 * k], "big") for k in range(ndim)]
    total = 1
    for k, d in enumerate(dims):
        total *= d
        if total > MAX_IDX_ELEMENTS:
            raise FormatError(f"IDX dimensions overflow ({dims})", 4 + 4 * k)
    if len(raw) < header + total:
        raise FormatError(
            f"truncated IDX payload: need {total} bytes, have {len(raw) - header}", len(raw))
    if len(raw) > header + total:
        raise FormatError("trailing bytes after IDX payload", header + total)
    return np.frombuffer(raw, dtype=np.uint8, count=total, offset=header).reshape(dims)


def load_idx(path, labels_path=None):
    """Load an IDX image file (optionally gzip-compressed) as a real
    dataset of raw pixel values, images flattened row-major."""
    raw = _read_bytes(path)
    arr = parse_idx(raw)
    if arr.ndim != 3:
        raise FormatError(f"expected an image file (3 dimensions), got {arr.ndim}", 3)
    labels = None
    if labels_path is not None:
        labels = parse_idx(_read_bytes(labels_path))
        if labels.ndim != 1 or labels.shape[0] != arr.shape[0]:
            raise FormatError("label file does not match the image count", 4)
    x = arr.reshape(arr.shape[0], -1).astype(np.float64)
    return Dataset(x, REAL, labels=labels, source=os.fspath(path),
                   sha256=hashlib.sha256(raw).hexdigest())


def binarize(ds, threshold=0.5):
    """``pixel / 255 >= threshold`` -> 1, else 0."""
    x = (ds.samples / 255.0 >= threshold).astype(np.float64)
    return Dataset(x, BINARY, train_idx=ds.train_idx, test_idx=ds.test_idx, folds=ds.folds,
                   labels=ds.labels, source=ds.source,
                   sha256=_derived_hash(ds.sha256, f"binarize:{threshold!r}"))


def _derived_hash(parent, op):
    return hashlib.sha256(f"{parent}|{op}".encode()).hexdigest()


# ---------------------------------------------------------------------------
# CSV


def load_csv(path, has_header=False, delimiter=",", kind=REAL):
    """Load a rectangular numeric CSV. Errors name the 1-based row and
    column of the offending cell."""
    with open(path, "rb") as f:
        raw = f.read()
    reader = csv.reader(io.StringIO(raw.decode("utf-8")), delimiter=delimiter)
    rows = []
    width = None
    for r, rec in enumerate(reader, start=1):
        if has_header and r == 1:
            continue
        if not rec or all(not c.strip() for c in rec):
            continue
        if width is None:
            width = len(rec)
        elif len(rec) != width:
            raise FormatError(f"row {r}: expected {width} columns, got {len(rec)}", r)
        vals = []
        for c, cell in enumerate(rec, start=1):
            try:
                vals.append(float(cell))
            except ValueError:
                raise FormatError(f"row {r}, column {c}: non-numeric cell {cell!r}", r) from None
        rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: no data rows", len(raw))
    return Dataset(np.array(rows), kind, source=os.fspath(path),
                   sha256=hashlib.sha256(raw).hexdigest())


def normalize(ds):
    """Zero-mean, unit-std columns; constant columns become 0 and keep a
    recorded std of 0. The returned dataset's statistics describe the
    normalised samples."""
    x = ds.samples
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    safe = np.where(sd > 0, sd, 1.0)
    z = np.where(sd > 0, (x - mu) / safe, 0.0)
    return Dataset(z, REAL, train_idx=ds.train_idx, test_idx=ds.test_idx, folds=ds.folds,
                   labels=ds.labels, source=ds.source,
                   sha256=_derived_hash(ds.sha256, "normalize"),
                   extra={**ds.extra, "raw_mean": mu, "raw_std": sd})


# ---------------------------------------------------------------------------
# cross-validation


def kfold(ds_or_n, k, rng=None):
    """Fold id per sample: a seeded shuffle cut into ``k`` near-equal
    parts (the first ``n % k`` folds hold one extra sample)."""
    n = ds_or_n if isinstance(ds_or_n, (int, np.integer)) else len(ds_or_n)
    if k < 2 or k > n:
        raise ParameterError(f"k must be in [2, {n}], got {k}")
    perm = np.random.default_rng(rng).permutation(n)
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.repeat(np.arange(k), sizes)
    return folds


def with_folds(ds, k, rng=None):
    return replace(ds, folds=_readonly(kfold(ds, k, rng)))


__all__ = [
    "Dataset", "synthetic_gaussian", "synthetic_binary", "load_idx", "parse_idx",
    "binarize", "load_csv", "normalize", "kfold", "with_folds", "random_split",
    "array_hash",
]
