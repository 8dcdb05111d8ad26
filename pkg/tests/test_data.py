import gzip

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xbm.data import (
    BINARY,
    REAL,
    Dataset,
    binarize,
    kfold,
    load_csv,
    load_idx,
    normalize,
    parse_idx,
    synthetic_binary,
    synthetic_gaussian,
    with_folds,
)
from xbm.errors import FormatError, ParameterError


def idx_images(pixels):
    pixels = np.asarray(pixels, dtype=np.uint8)
    n, r, c = pixels.shape
    head = (0x803).to_bytes(4, "big") + b"".join(d.to_bytes(4, "big") for d in (n, r, c))
    return head + pixels.tobytes()


def idx_labels(labels):
    labels = np.asarray(labels, dtype=np.uint8)
    return (0x801).to_bytes(4, "big") + len(labels).to_bytes(4, "big") + labels.tobytes()


# ---------------------------------------------------------------------------
# IDX


def test_idx_hand_fixture(tmp_path):
    p = tmp_path / "img.idx"
    p.write_bytes(idx_images([[[0, 255], [128, 3]], [[1, 2], [3, 4]]]))
    lp = tmp_path / "lab.idx"
    lp.write_bytes(idx_labels([7, 1]))
    ds = load_idx(p, lp)
    np.testing.assert_array_equal(ds.samples, [[0, 255, 128, 3], [1, 2, 3, 4]])
    np.testing.assert_array_equal(ds.labels, [7, 1])
    assert ds.kind == REAL and ds.n_samples == 2 and ds.n_features == 4


def test_idx_gzip_matches_plain(tmp_path):
    raw = idx_images(np.arange(12).reshape(3, 2, 2))
    (tmp_path / "a").write_bytes(raw)
    (tmp_path / "b.gz").write_bytes(gzip.compress(raw))
    a, b = load_idx(tmp_path / "a"), load_idx(tmp_path / "b.gz")
    np.testing.assert_array_equal(a.samples, b.samples)


def test_idx_errors():
    good = idx_images(np.zeros((2, 2, 2)))
    with pytest.raises(FormatError) as e:
        parse_idx(b"\x00\x00\x09\x03" + good[4:])
    assert e.value.offset == 0
    with pytest.raises(FormatError):
        parse_idx(good[:-1])
    with pytest.raises(FormatError):
        parse_idx(good + b"\x00")
    with pytest.raises(FormatError):
        parse_idx(good[:6])
    with pytest.raises(FormatError):
        parse_idx(b"\x00\x00")


def test_idx_label_count_mismatch(tmp_path):
    (tmp_path / "i").write_bytes(idx_images(np.zeros((2, 2, 2))))
    (tmp_path / "l").write_bytes(idx_labels([1, 2, 3]))
    with pytest.raises(FormatError):
        load_idx(tmp_path / "i", tmp_path / "l")


def test_idx_hash_is_file_hash(tmp_path):
    import hashlib
    raw = idx_images(np.ones((1, 2, 2)))
    (tmp_path / "i").write_bytes(raw)
    assert load_idx(tmp_path / "i").sha256 == hashlib.sha256(raw).hexdigest()


def test_binarize_threshold():
    ds = Dataset(np.array([[0, 127, 128, 255], [0, 0, 0, 0]], dtype=float), REAL)
    b = binarize(ds)
    np.testing.assert_array_equal(b.samples, [[0, 0, 1, 1], [0, 0, 0, 0]])
    assert b.kind == BINARY
    assert binarize(Dataset(np.zeros((3, 2)), REAL)).samples.sum() == 0


# ---------------------------------------------------------------------------
# CSV and normalisation


def test_csv_load(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n3,4.5\n\n")
    ds = load_csv(p, has_header=True)
    np.testing.assert_array_equal(ds.samples, [[1, 2], [3, 4.5]])


def test_csv_errors_locate_cell(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,2\n3,x\n")
    with pytest.raises(FormatError, match="row 2, column 2"):
        load_csv(p)
    p.write_text("1,2\n3\n")
    with pytest.raises(FormatError, match="row 2"):
        load_csv(p)
    p.write_text("\n")
    with pytest.raises(FormatError):
        load_csv(p)


def test_normalize_fixture():
    ds = Dataset(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]), REAL)
    z = normalize(ds)
    s = np.sqrt(2 / 3)
    np.testing.assert_allclose(z.samples, [[-1 / s, 0], [0, 0], [1 / s, 0]])
    np.testing.assert_allclose(z.feature_std, [1, 0], atol=1e-15)
    np.testing.assert_allclose(z.extra["raw_mean"], [2, 5])


@given(st.integers(0, 2**32 - 1))
def test_normalize_idempotent(seed):
    rng = np.random.default_rng(seed)
    ds = Dataset(rng.normal(3, 2, (20, 4)), REAL)
    once = normalize(ds)
    twice = normalize(once)
    np.testing.assert_allclose(once.samples, twice.samples, atol=1e-12)
    np.testing.assert_allclose(once.feature_mean, 0, atol=1e-12)
    np.testing.assert_allclose(once.feature_std, 1, atol=1e-12)


# ---------------------------------------------------------------------------
# datasets, splits, folds


def test_dataset_is_immutable():
    ds = Dataset(np.zeros((2, 2)), REAL)
    with pytest.raises(ValueError):
        ds.samples[0, 0] = 1
    with pytest.raises(Exception):
        ds.kind = BINARY


def test_dataset_validation():
    with pytest.raises(ParameterError):
        Dataset(np.zeros(3), REAL)
    with pytest.raises(ParameterError):
        Dataset(np.full((2, 2), 0.5), BINARY)
    with pytest.raises(ParameterError):
        Dataset(np.zeros((2, 2)), "other")
    with pytest.raises(ParameterError):
        Dataset(np.zeros((4, 2)), REAL).with_split([0, 1], [1, 2])


@pytest.mark.parametrize("n,k", [(10, 10), (1059, 10), (7, 3), (100, 2)])
def test_kfold_partition(n, k):
    folds = kfold(n, k, rng=0)
    sizes = np.bincount(folds, minlength=k)
    assert sizes.sum() == n and sizes.max() - sizes.min() <= 1
    assert list(sizes) == sorted(sizes, reverse=True)


def test_kfold_1059():
    sizes = np.bincount(kfold(1059, 10, rng=1))
    assert list(sizes) == [106] * 9 + [105]


def test_kfold_errors_and_determinism():
    with pytest.raises(ParameterError):
        kfold(5, 1)
    with pytest.raises(ParameterError):
        kfold(5, 6)
    np.testing.assert_array_equal(kfold(50, 5, rng=3), kfold(50, 5, rng=3))


def test_fold_split_covers_everything():
    ds = with_folds(synthetic_gaussian(23, 2, rng=0), 4, rng=1)
    seen = []
    for f in range(4):
        s = ds.fold_split(f)
        assert np.intersect1d(s.train_idx, s.test_idx).size == 0
        assert len(s.train_idx) + len(s.test_idx) == 23
        seen.extend(s.test_idx)
    assert sorted(seen) == list(range(23))


@given(st.integers(0, 2**32 - 1))
def test_synthetic_gaussian_statistics(seed):
    ds = synthetic_gaussian(1000, 5, rng=seed)
    assert ds.samples.shape == (1000, 5)
    assert len(ds.train_idx) == 700 and len(ds.test_idx) == 300
    assert np.all(np.abs(ds.samples.mean(axis=0)) < 4 / np.sqrt(1000))
    np.testing.assert_allclose(ds.feature_mean, ds.samples.mean(axis=0))
    np.testing.assert_allclose(ds.feature_std, ds.samples.std(axis=0))


def test_synthetic_binary_rates():
    ds = synthetic_binary(4000, 3, rng=0, p=np.array([0.1, 0.5, 0.9]))
    assert ds.kind == BINARY
    np.testing.assert_allclose(ds.samples.mean(axis=0), [0.1, 0.5, 0.9], atol=4 * 0.5 / np.sqrt(4000))


def test_hash_determinism():
    a = synthetic_gaussian(10, 3, rng=5)
    b = synthetic_gaussian(10, 3, rng=5)
    c = synthetic_gaussian(10, 3, rng=6)
    assert a.sha256 == b.sha256 != c.sha256
    assert len(a.sha256) == 64


def test_subset():
    ds = synthetic_gaussian(10, 2, rng=0)
    s = ds.subset(4)
    np.testing.assert_array_equal(s.samples, ds.samples[:4])
    r = ds.subset(4, rng=1)
    assert r.n_samples == 4
    with pytest.raises(ParameterError):
        ds.subset(11)
