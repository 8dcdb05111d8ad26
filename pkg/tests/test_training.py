import itertools

import numpy as np
import pytest

from xbm.data import synthetic_gaussian
from xbm.errors import ParameterError, TrainingDivergence
from xbm.graph import BipartiteGraph
from xbm.models import BoltzmannMachine
from xbm.training import (
    GradientSet,
    InverseTimeDecay,
    LinearCDRamp,
    TrainConfig,
    apply_update,
    cd_gradients,
    load_checkpoint,
    make_fixprob_mask,
    save_checkpoint,
    train,
    train_prune_train,
)


def tiny_binary(seed, n_v=2, n_h=2, scale=1.0, mask=None):
    rng = np.random.default_rng(seed)
    W = rng.normal(0, scale, (n_v, n_h))
    return BoltzmannMachine.from_dense("binary", W, rng.normal(0, scale, n_v),
                                       rng.normal(0, scale, n_h), mask=mask)


# ---------------------------------------------------------------------------
# config and schedules


def test_config_validation():
    for bad in ({"learning_rate": 0}, {"momentum": 1.0}, {"weight_decay": -1},
                {"batch_size": 0}, {"cd_steps": 0}, {"negative_visible": "x"}):
        with pytest.raises(ParameterError):
            TrainConfig(**bad)


def test_config_defaults_and_round_trip():
    cfg = TrainConfig()
    assert (cfg.learning_rate, cfg.momentum, cfg.weight_decay, cfg.cd_steps) == (0.001, 0.5, 0.0002, 1)
    ramp = TrainConfig(learning_rate=InverseTimeDecay(0.05), cd_steps=LinearCDRamp(1, 25))
    assert TrainConfig.from_dict(ramp.to_dict()) == ramp


def test_cd_ramp_covers_range_in_equal_blocks():
    ramp = LinearCDRamp(1, 25)
    steps = [ramp(e, 250) for e in range(250)]
    assert steps[0] == 1 and steps[-1] == 25
    assert all(b - a in (0, 1) for a, b in zip(steps, steps[1:]))
    assert [steps.count(k) for k in range(1, 26)] == [10] * 25


def test_inverse_time_decay():
    sched = InverseTimeDecay(0.05)
    assert sched(0, 1000) == 0.05
    assert sched(500, 1000) == pytest.approx(0.025)
    assert InverseTimeDecay(0.1, half_life=10)(10, 999) == pytest.approx(0.05)


# ---------------------------------------------------------------------------
# gradients


def test_cd_rejects_bad_inputs():
    m = tiny_binary(0)
    with pytest.raises(ParameterError):
        cd_gradients(m, np.zeros((0, 2)), 1, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        cd_gradients(m, np.zeros((1, 2)), 0, np.random.default_rng(0))


def test_cd_zero_when_chain_reproduces_data():
    g = BipartiteGraph.complete(2, 3)
    m = BoltzmannMachine("binary", g, np.zeros(6), [60.0, -60.0], [0.3, -0.2, 1.0])
    grads = cd_gradients(m, np.array([[1.0, 0.0]] * 4), 3, np.random.default_rng(0))
    for part in grads.as_tuple():
        np.testing.assert_array_equal(part, 0.0)


def cd1_expectation(m, v0):
    """Exact expectation of the CD-1 estimate at one data vector: enumerate
    the sampled hidden state and the sampled reconstruction."""
    ph0 = m.hidden_conditional(v0)
    n_v, n_h = m.n_visible, m.n_hidden
    e_neg_w = np.zeros((n_v, n_h))
    e_vn = np.zeros(n_v)
    e_phn = np.zeros(n_h)
    for h in itertools.product((0.0, 1.0), repeat=n_h):
        h = np.array(h)
        p_h = np.prod(np.where(h == 1, ph0, 1 - ph0))
        pv = m.visible_mean(h)
        for v in itertools.product((0.0, 1.0), repeat=n_v):
            v = np.array(v)
            p = p_h * np.prod(np.where(v == 1, pv, 1 - pv))
            phn = m.hidden_conditional(v)
            e_neg_w += p * np.outer(v, phn)
            e_vn += p * v
            e_phn += p * phn
    dW = np.outer(v0, ph0) - e_neg_w
    W_edges = dW[m.graph.rows, m.graph.cols]
    return np.concatenate([W_edges, v0 - e_vn, ph0 - e_phn])


def test_cd1_mean_matches_enumerated_expectation():
    m = tiny_binary(10, scale=1.5)
    v0 = np.array([1.0, 0.0])
    expected = cd1_expectation(m, v0)
    est = cd_gradients(m, np.tile(v0, (10_000, 1)), 1, np.random.default_rng(7))
    got = np.concatenate(est.as_tuple())
    assert np.all(np.abs(expected) > 0.1)  # well-conditioned coordinates
    np.testing.assert_allclose(got, expected, rtol=0.05)


@pytest.mark.parametrize("seed", range(5))
def test_cd_sparse_matches_dense_twin(seed):
    rng = np.random.default_rng(seed)
    mask = rng.random((6, 5)) < 0.5
    sparse = tiny_binary(seed, 6, 5, mask=mask)
    dense = sparse.dense_twin()
    batch = rng.integers(0, 2, (8, 6)).astype(float)
    gs = cd_gradients(sparse, batch, 2, np.random.default_rng(99))
    gd = cd_gradients(dense, batch, 2, np.random.default_rng(99))
    present = mask[dense.graph.rows, dense.graph.cols]
    np.testing.assert_allclose(gs.d_weights, gd.d_weights[present], atol=1e-10)
    np.testing.assert_allclose(gs.d_a, gd.d_a, atol=1e-10)
    np.testing.assert_allclose(gs.d_b, gd.d_b, atol=1e-10)
    assert gs.d_weights.shape == (sparse.graph.n_edges,)


def test_gaussian_negative_visible_modes():
    ds = synthetic_gaussian(20, 4, rng=0)
    m = BoltzmannMachine.initialize("gaussian", BipartiteGraph.complete(4, 3), rng=0, weight_std=0.3)
    a = cd_gradients(m, ds.samples, 1, np.random.default_rng(1))
    b = cd_gradients(m, ds.samples, 1, np.random.default_rng(1), negative_visible="mean")
    np.testing.assert_array_equal(a.d_weights, b.d_weights)  # auto == mean for gaussian
    c = cd_gradients(m, ds.samples, 1, np.random.default_rng(1), negative_visible="sample")
    assert not np.allclose(a.d_weights, c.d_weights)


# ---------------------------------------------------------------------------
# updates


def _grads(m, value):
    return GradientSet(np.full(m.graph.n_edges, value), np.full(m.n_visible, value),
                       np.full(m.n_hidden, value))


def test_plain_sgd_step():
    m = tiny_binary(0)
    cfg = TrainConfig(learning_rate=0.1, momentum=0.0, weight_decay=0.0)
    new, _ = apply_update(m, _grads(m, 2.0), GradientSet.zeros_like(m), cfg)
    np.testing.assert_allclose(new.weights - m.weights, 0.2, rtol=1e-15)
    np.testing.assert_allclose(new.visible_bias - m.visible_bias, 0.2, rtol=1e-15)


def test_momentum_two_steps():
    m = tiny_binary(0)
    cfg = TrainConfig(learning_rate=1.0, momentum=0.5, weight_decay=0.0)
    vel = GradientSet.zeros_like(m)
    m1, vel = apply_update(m, _grads(m, 0.25), vel, cfg)
    m2, vel = apply_update(m1, _grads(m, 0.25), vel, cfg)
    np.testing.assert_allclose(m1.hidden_bias - m.hidden_bias, 0.25)
    np.testing.assert_allclose(m2.hidden_bias - m1.hidden_bias, 0.375)


def test_weight_decay_contracts_weights_only():
    m = tiny_binary(0)
    cfg = TrainConfig(learning_rate=0.5, momentum=0.0, weight_decay=0.1)
    new, _ = apply_update(m, _grads(m, 0.0), GradientSet.zeros_like(m), cfg)
    np.testing.assert_allclose(new.weights, m.weights * (1 - 0.05), rtol=1e-15)
    np.testing.assert_array_equal(new.visible_bias, m.visible_bias)
    np.testing.assert_array_equal(new.hidden_bias, m.hidden_bias)


def test_momentum_limit():
    m = tiny_binary(0)
    cfg = TrainConfig(learning_rate=0.01, momentum=0.5, weight_decay=0.0)
    vel = GradientSet.zeros_like(m)
    for _ in range(200):
        m, vel = apply_update(m, _grads(m, 3.0), vel, cfg)
    np.testing.assert_allclose(vel.d_a, 0.01 * 3.0 / 0.5, atol=1e-6)


# ---------------------------------------------------------------------------
# training loop


def test_zero_epochs_returns_model_unchanged():
    m = tiny_binary(0, 4, 3)
    data = np.random.default_rng(0).integers(0, 2, (10, 4)).astype(float)
    res = train(m, data, TrainConfig(epochs=0))
    assert res.model is m and res.trace == []


def test_training_is_deterministic_and_keeps_mask():
    ds = synthetic_gaussian(60, 8, rng=1)
    g = BipartiteGraph.from_mask(np.random.default_rng(2).random((8, 5)) < 0.5)
    m = BoltzmannMachine.initialize("gaussian", g, rng=3)
    cfg = TrainConfig(epochs=3, batch_size=7, learning_rate=0.01, seed=4)
    a = train(m, ds, cfg)
    b = train(m, ds, cfg)
    assert a.model.weights.tobytes() == b.model.weights.tobytes()
    assert a.model.graph == g
    assert [r["epoch"] for r in a.trace] == [1, 2, 3]
    assert {"train_rmse", "test_rmse", "train_pcc", "test_pcc"} <= set(a.trace[0])


def test_kind_mismatch_rejected():
    ds = synthetic_gaussian(10, 3, rng=0)
    m = BoltzmannMachine.initialize("binary", BipartiteGraph.complete(3, 2), rng=0)
    with pytest.raises(ParameterError):
        train(m, ds, TrainConfig(epochs=1))
    with pytest.raises(ParameterError):
        train(m, np.full((4, 3), 0.5), TrainConfig(epochs=1))


def test_divergence_detected():
    ds = synthetic_gaussian(50, 5, rng=0)
    m = BoltzmannMachine.initialize("gaussian", BipartiteGraph.complete(5, 5), rng=0, weight_std=5)
    m = m.copy(visible_bias=np.full(5, 1e150))
    with np.errstate(all="ignore"), pytest.raises(TrainingDivergence):
        train(m, ds, TrainConfig(epochs=3, learning_rate=1e10, batch_size=5))


def test_training_improves_reconstruction():
    ds = synthetic_gaussian(300, 10, rng=5)
    m = BoltzmannMachine.initialize("gaussian", BipartiteGraph.complete(10, 30), rng=5)
    res = train(m, ds, TrainConfig(epochs=20, batch_size=1, learning_rate=0.01, seed=5))
    rmse = [r["test_rmse"] for r in res.trace]
    assert rmse[-1] < rmse[0] - 0.2


def test_cd_schedule_in_trace():
    data = np.random.default_rng(0).integers(0, 2, (20, 4)).astype(float)
    m = tiny_binary(0, 4, 3)
    cfg = TrainConfig(epochs=4, cd_steps=LinearCDRamp(1, 4), learning_rate=InverseTimeDecay(0.05))
    res = train(m, data, cfg)
    assert [r["cd_steps"] for r in res.trace] == [1, 2, 3, 4]
    lrs = [r["learning_rate"] for r in res.trace]
    assert all(a > b for a, b in zip(lrs, lrs[1:]))


# ---------------------------------------------------------------------------
# baselines


def test_fixprob_full_density_is_complete():
    assert make_fixprob_mask(7, 9, 63, 0).is_complete


def test_fixprob_edge_count_concentrates():
    p = 712 / 10_000
    counts = [make_fixprob_mask(100, 100, 712, s).n_edges for s in range(200)]
    assert abs(np.mean(counts) - 712) <= 3 * np.sqrt(712 * (1 - p))
    assert abs(np.mean(counts) - 712) <= 3 * np.sqrt(712 * (1 - p) / 200)


def test_fixprob_range():
    with pytest.raises(ParameterError):
        make_fixprob_mask(3, 3, 0)
    with pytest.raises(ParameterError):
        make_fixprob_mask(3, 3, 10)


def _binary_data(n=40, d=20, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.random((n, d)) < rng.uniform(0.2, 0.8, d)).astype(float)


def test_prune_target_equal_to_current():
    m = BoltzmannMachine.initialize("binary", BipartiteGraph.complete(5, 4), rng=0)
    res = train_prune_train(m, _binary_data(10, 5), TrainConfig(epochs=1), 20)
    assert res.iterations == 0 and res.reached and res.model.graph.n_edges == 20


def test_prune_replay_log():
    m0 = BoltzmannMachine.initialize("binary", BipartiteGraph.complete(20, 20), rng=0)
    cfg = TrainConfig(epochs=2, batch_size=10, learning_rate=0.05)
    res = train_prune_train(m0, _binary_data(), cfg, target_edges=40, rng=1)
    assert res.reached and res.model.graph.n_edges == 40
    counts = [t["n_edges"] for t in res.trace]
    assert all(a > b for a, b in zip(counts, counts[1:]))
    assert res.model.graph.edge_set() <= m0.graph.edge_set()
    for step in res.log:
        # everything pruned at this step was no larger than anything kept
        assert step["magnitudes"].max() <= step["kept_min_magnitude"]
    removed = set()
    for step in res.log:
        removed |= set(zip(step["rows"].tolist(), step["cols"].tolist()))
    assert removed.isdisjoint(res.model.graph.edge_set())
    assert len(removed) + 40 == 400


def test_prune_budget_exhausted():
    m0 = BoltzmannMachine.initialize("binary", BipartiteGraph.complete(10, 10), rng=0)
    res = train_prune_train(m0, _binary_data(20, 10), TrainConfig(epochs=1), target_edges=5,
                            max_prune_iters=2)
    assert res.iterations == 2 and not res.reached and res.model.graph.n_edges > 5


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip(tmp_path):
    m = tiny_binary(0, 4, 3)
    vel = GradientSet(np.arange(12.0), np.arange(4.0), np.arange(3.0))
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, m, vel, epoch=7, meta={"seed": 3})
    m2, vel2, epoch, meta = load_checkpoint(path)
    assert epoch == 7 and meta == {"seed": 3}
    assert m2.weights.tobytes() == m.weights.tobytes()
    np.testing.assert_array_equal(vel2.d_weights, vel.d_weights)
