import math
from dataclasses import replace

import numpy as np
import pytest

from bsce.data import Dataset, DatasetSpec, Split, synth_dataset
from bsce.errors import (
    CorruptDataError,
    ShapeError,
    StorageIOError,
    TrainingDivergedError,
    VersionMismatchError,
)
from bsce.losses import LossConfig, class_weights
from bsce.prob_core import one_hot, softmax, top1
from bsce.trainer import (
    TrainConfig,
    TrainState,
    batch_loss_and_grads,
    forward,
    init_model,
    load_checkpoint,
    plateau_step,
    save_checkpoint,
    train,
)

TINY = DatasetSpec(num_classes=4, head_count=30, imbalance_ratio=3, noise_rate=0.2, image_side=8,
                   val_per_class=5, test_per_class=5, seed=1, prototype_grid=3)


@pytest.fixture(scope="module")
def tiny():
    return synth_dataset(TINY)


def test_init_deterministic_and_zero_bias():
    a = init_model(6, 5, 3, seed=4)
    b = init_model(6, 5, 3, seed=4)
    assert a.equals(b)
    assert not a.equals(init_model(6, 5, 3, seed=5))
    assert np.all(a.feature_bias == 0) and np.all(a.head_bias == 0)
    assert np.abs(a.feature_weights).max() <= 1 / 6
    assert np.abs(a.head_weights).max() <= 1 / math.sqrt(5)


def test_init_linear_model():
    m = init_model(6, 0, 3, seed=0)
    assert m.feature_weights is None and m.hidden_dim == 0
    assert m.head_weights.shape == (36, 3)
    img = np.random.default_rng(0).random((6, 6))
    feats, _ = forward(m, img)
    np.testing.assert_array_equal(feats, img.ravel())


def test_zero_image_zero_logits():
    m = init_model(5, 0, 3, seed=0)
    _, logits = forward(m, np.zeros((5, 5)))
    np.testing.assert_array_equal(logits, 0.0)


def test_bias_shift_keeps_prediction():
    m = init_model(5, 4, 3, seed=2)
    img = np.random.default_rng(1).random((5, 5))
    _, logits = forward(m, img)
    shifted = replace(m, head_bias=m.head_bias + 7.5)
    _, logits2 = forward(shifted, img)
    np.testing.assert_allclose(softmax(logits2), softmax(logits), atol=1e-12)
    assert top1(logits2) == top1(logits)


def naive_forward(m, img):
    x = [float(v) for v in np.asarray(img).ravel()]
    if m.feature_weights is not None:
        w, b = m.feature_weights, m.feature_bias
        feats = [max(0.0, b[j] + sum(x[i] * w[i, j] for i in range(len(x)))) for j in range(w.shape[1])]
    else:
        feats = x
    hw, hb = m.head_weights, m.head_bias
    logits = [hb[k] + sum(feats[j] * hw[j, k] for j in range(len(feats))) for k in range(hw.shape[1])]
    return np.array(feats), np.array(logits)


@pytest.mark.parametrize("hidden", [0, 3])
def test_forward_matches_naive_loops(hidden):
    rng = np.random.default_rng(hidden)
    m = init_model(4, hidden, 3, seed=hidden)
    if hidden:
        m.feature_bias[:] = rng.normal(size=hidden)
    m.head_bias[:] = rng.normal(size=3)
    for _ in range(5):
        img = rng.random((4, 4))
        f, z = forward(m, img)
        nf, nz = naive_forward(m, img)
        np.testing.assert_allclose(f, nf, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(z, nz, rtol=1e-12, atol=1e-14)


def test_forward_shape_error():
    with pytest.raises(ShapeError):
        forward(init_model(4, 0, 2, seed=0), np.zeros((5, 5)))


def test_forward_batch_matches_single():
    m = init_model(4, 3, 3, seed=1)
    imgs = np.random.default_rng(0).random((6, 4, 4))
    fb, zb = forward(m, imgs)
    for i in range(6):
        f, z = forward(m, imgs[i])
        np.testing.assert_allclose(fb[i], f, rtol=1e-14)
        np.testing.assert_allclose(zb[i], z, rtol=1e-14)


def _batch_loss(m, x, q, cfg, w):
    loss, _, _ = batch_loss_and_grads(m, x, q, cfg, w)
    return loss


def _fd_param_grads(m, x, q, cfg, w, h=1e-6):
    out = {}
    for name, arr in m.arrays().items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = _batch_loss(m, x, q, cfg, w)
            arr[idx] = old - h
            down = _batch_loss(m, x, q, cfg, w)
            arr[idx] = old
            g[idx] = (up - down) / (2 * h)
        out[name] = g
    return out


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)


@pytest.mark.parametrize("kind", ["ce", "bce", "rce", "sce", "bsce"])
@pytest.mark.parametrize("hidden", [0, 4])
def test_parameter_gradients_match_finite_differences(kind, hidden):
    rng = np.random.default_rng(17)
    m = init_model(3, hidden, 3, seed=3)
    x = rng.random((5, 9))
    if hidden:
        pre = x @ m.feature_weights + m.feature_bias
        # keep away from the ReLU kink
        m.feature_bias[:] = np.where(np.abs(pre).min(axis=0) < 1e-3, 0.05, 0.0)
        assert np.abs(x @ m.feature_weights + m.feature_bias).min() > 1e-4
    q = one_hot(rng.integers(0, 3, size=5), 3)
    w = class_weights([5, 2, 1])
    cfg = LossConfig(kind=kind)
    _, _, grads = batch_loss_and_grads(m, x, q, cfg, w)
    fd = _fd_param_grads(m, x, q, cfg, w)
    for name in grads:
        assert _rel(grads[name], fd[name]) < 1e-5, name


def _square_dataset(side=4, n=12, k=3, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % k
    split = Split(rng.random((n, side, side)).astype(np.float32), labels, labels)
    return Dataset(split, split, split, num_classes=k)


def test_one_sgd_step_equals_negative_lr_gradient():
    ds = _square_dataset()
    m = init_model(4, 0, 3, seed=0)
    cfg = TrainConfig(loss=LossConfig(kind="ce"), epochs=1, batch_size=len(ds.train), initial_lr=0.5)
    state = train(ds, m, cfg)
    x = ds.train.pixels.reshape(len(ds.train), -1).astype(np.float64)
    q = one_hot(ds.train.observed_labels, 3)
    fd = _fd_param_grads(m.copy(), x, q, cfg.loss, None)
    for name, before in m.arrays().items():
        step = (getattr(state.params, name) - before) / -cfg.initial_lr
        assert _rel(step, fd[name]) < 1e-5


def test_zero_epochs_is_noop(tiny):
    m = init_model(6, 0, 4, seed=0)
    state = train(tiny, m, TrainConfig(epochs=0))
    assert state.params.equals(m) and state.history == []


def test_zero_lr_leaves_params(tiny):
    m = init_model(6, 3, 4, seed=0)
    state = train(tiny, m, TrainConfig(epochs=3, initial_lr=0.0))
    assert state.params.equals(m)
    assert len(state.history) == 3


def test_train_does_not_mutate_model(tiny):
    m = init_model(6, 0, 4, seed=0)
    snapshot = m.copy()
    train(tiny, m, TrainConfig(epochs=2))
    assert m.equals(snapshot)


def test_train_deterministic(tiny):
    cfg = TrainConfig(epochs=4, seed=3)
    a = train(tiny, init_model(6, 4, 4, seed=1), cfg)
    b = train(tiny, init_model(6, 4, 4, seed=1), cfg)
    assert a.params.equals(b.params)
    assert a.history == b.history


def test_history_and_lr_invariants(tiny):
    cfg = TrainConfig(epochs=12, patience=1, min_delta=0.5)
    state = train(tiny, init_model(6, 0, 4, seed=1), cfg)
    epochs = [r.epoch for r in state.history]
    assert epochs == list(range(1, 13))
    r = sum(rec.lr_reduced for rec in state.history)
    assert r == state.num_reductions > 0
    assert state.current_lr == cfg.initial_lr * cfg.lr_factor ** r


def test_class_mismatch(tiny):
    with pytest.raises(ShapeError):
        train(tiny, init_model(6, 0, 3, seed=0), TrainConfig(epochs=1))


def test_divergence_reports_epoch(tiny):
    with pytest.raises(TrainingDivergedError) as info:
        train(tiny, init_model(6, 8, 4, seed=0), TrainConfig(loss=LossConfig(kind="ce"), epochs=5, initial_lr=1e200))
    assert info.value.epoch == 1
    assert "epoch 1" in str(info.value)


# plateau schedule


def _feed(errors, cfg):
    state = TrainState.fresh(None, cfg)
    lrs = []
    for e in errors:
        state = plateau_step(state, e, cfg)
        lrs.append(state.current_lr)
    return state, lrs


def test_plateau_reduces_after_patience():
    cfg = TrainConfig(patience=3)
    _, lrs = _feed([0.5, 0.5, 0.5, 0.5], cfg)
    assert lrs[:3] == [0.01, 0.01, 0.01]
    assert lrs[3] == 0.001


def test_plateau_strict_improvement_never_reduces():
    cfg = TrainConfig(patience=1)
    state, lrs = _feed(np.linspace(0.9, 0.1, 30), cfg)
    assert set(lrs) == {0.01} and state.num_reductions == 0


def test_plateau_min_delta():
    cfg = TrainConfig(patience=1, min_delta=0.01)
    state, lrs = _feed([0.5, 0.495], cfg)
    assert lrs == [0.01, 0.001]
    assert state.best_val_error == 0.5


def test_plateau_counter_resets_after_reduction():
    cfg = TrainConfig(patience=2)
    state, lrs = _feed([0.5] * 5, cfg)
    assert state.num_reductions == 2
    assert lrs[-1] == pytest.approx(1e-4)
    assert state.epochs_since_improvement == 0


# checkpoints


def test_checkpoint_round_trip(tmp_path, tiny):
    cfg = TrainConfig(epochs=3)
    state = train(tiny, init_model(6, 5, 4, seed=2), cfg)
    path = tmp_path / "c.ckpt"
    save_checkpoint(state, path, cfg)
    back, echo = load_checkpoint(path)
    assert back.params.equals(state.params)
    assert back.history == state.history
    assert (back.current_lr, back.best_val_error, back.epochs_since_improvement, back.num_reductions) == (
        state.current_lr, state.best_val_error, state.epochs_since_improvement, state.num_reductions)
    assert echo == cfg.to_dict()
    assert TrainConfig(**echo) == cfg
    assert path.read_bytes()[:9] == b"BSCECKPT1"


def test_fresh_state_checkpoint(tmp_path):
    state = TrainState.fresh(init_model(3, 0, 2, seed=0), TrainConfig())
    save_checkpoint(state, tmp_path / "c")
    back, echo = load_checkpoint(tmp_path / "c")
    assert back.best_val_error == math.inf and echo == {}


@pytest.mark.parametrize("hidden", [0, 4])
def test_resume_matches_uninterrupted(tmp_path, tiny, hidden):
    cfg = TrainConfig(epochs=6, seed=9, patience=1)
    model = init_model(6, hidden, 4, seed=5)
    full = train(tiny, model, cfg)
    partial = train(tiny, model, replace(cfg, epochs=2))
    save_checkpoint(partial, tmp_path / "p.ckpt", cfg)
    loaded, _ = load_checkpoint(tmp_path / "p.ckpt")
    resumed = train(tiny, model, cfg, resume=loaded)
    assert resumed.params.equals(full.params)
    assert resumed.history == full.history
    assert resumed.current_lr == full.current_lr


def test_checkpoint_corruption(tmp_path, tiny):
    path = tmp_path / "c.ckpt"
    save_checkpoint(train(tiny, init_model(6, 0, 4, seed=0), TrainConfig(epochs=1)), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-30])
    with pytest.raises(CorruptDataError):
        load_checkpoint(path)
    flipped = bytearray(raw)
    flipped[100] ^= 0xFF
    path.write_bytes(bytes(flipped))
    with pytest.raises(CorruptDataError):
        load_checkpoint(path)
    path.write_bytes(b"BSCECKPT2" + raw[9:])
    with pytest.raises(VersionMismatchError):
        load_checkpoint(path)
    path.write_bytes(b"BSC")
    with pytest.raises(CorruptDataError):
        load_checkpoint(path)
    with pytest.raises(StorageIOError):
        load_checkpoint(tmp_path / "missing")


@pytest.mark.slow
def test_learnable_without_noise_or_imbalance():
    ds = synth_dataset(DatasetSpec(imbalance_ratio=1, noise_rate=0.0, seed=0))
    state = train(ds, init_model(24, 0, 20, seed=0), TrainConfig(loss=LossConfig(kind="ce"), epochs=30))
    assert min(r.val_error for r in state.history) < 0.1
