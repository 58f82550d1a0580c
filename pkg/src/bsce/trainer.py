"""Desk-scale classifier trained with plain SGD and a reduce-on-plateau schedule.

The model is a linear softmax head on top of either the flattened input
pixels or a single ReLU hidden layer. ``forward`` returns the pre-head
features alongside the logits so test-time augmentation can average them.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import struct
import zlib
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .data import class_counts
from .errors import (
    ConfigError,
    CorruptDataError,
    InvalidInputError,
    ShapeError,
    StorageIOError,
    TrainingDivergedError,
    VersionMismatchError,
)
from .imaging import center_crop
from .losses import LossConfig, LossKind, batch_loss_with_grad, class_weights
from .prob_core import one_hot, softmax, top1

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"BSCECKPT1"


@dataclass(eq=False)
class ModelParams:
    head_weights: np.ndarray
    head_bias: np.ndarray
    input_side: int
    feature_weights: np.ndarray | None = None
    feature_bias: np.ndarray | None = None

    @property
    def num_classes(self):
        return self.head_weights.shape[1]

    @property
    def hidden_dim(self):
        return 0 if self.feature_weights is None else self.feature_weights.shape[1]

    def arrays(self):
        """Named parameter arrays in a fixed order."""
        out = {}
        if self.feature_weights is not None:
            out["feature_weights"] = self.feature_weights
            out["feature_bias"] = self.feature_bias
        out["head_weights"] = self.head_weights
        out["head_bias"] = self.head_bias
        return out

    def copy(self):
        return replace(self, **{k: v.copy() for k, v in self.arrays().items()})

    def equals(self, other):
        a, b = self.arrays(), other.arrays()
        return (
            self.input_side == other.input_side
            and a.keys() == b.keys()
            and all(np.array_equal(a[k], b[k]) for k in a)
        )


@dataclass(frozen=True)
class TrainConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    initial_lr: float = 0.01
    lr_factor: float = 0.1
    patience: int = 3
    min_delta: float = 1e-4
    epochs: int = 30
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", LossConfig(**self.loss))
        if not 0 < self.lr_factor < 1:
            raise ConfigError("lr_factor must lie in (0, 1)")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if self.initial_lr < 0:
            raise ConfigError("initial_lr must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.min_delta < 0:
            raise ConfigError("min_delta must be non-negative")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["loss"]["kind"] = self.loss.kind.value
        return d


class EpochRecord(NamedTuple):
    epoch: int
    train_loss: float
    val_error: float
    lr: float
    lr_reduced: bool


@dataclass(eq=False)
class TrainState:
    params: ModelParams
    current_lr: float
    best_val_error: float = math.inf
    epochs_since_improvement: int = 0
    num_reductions: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, params, cfg):
        return cls(params=params, current_lr=cfg.initial_lr)


def init_model(input_side, hidden_dim, num_classes, seed):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases."""
    if input_side < 1 or hidden_dim < 0 or num_classes < 2:
        raise ConfigError("need input_side >= 1, hidden_dim >= 0 and at least two classes")
    rng = np.random.default_rng(seed)
    d_in = input_side * input_side

    def layer(fan_in, fan_out):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)

    fw = fb = None
    d_feat = d_in
    if hidden_dim > 0:
        fw, fb = layer(d_in, hidden_dim)
        d_feat = hidden_dim
    hw, hb = layer(d_feat, num_classes)
    return ModelParams(head_weights=hw, head_bias=hb, input_side=input_side, feature_weights=fw, feature_bias=fb)


def _flatten(params, crops):
    crops = np.asarray(crops, dtype=np.float64)
    s = params.input_side
    if crops.shape[-2:] != (s, s):
        raise ShapeError(f"model expects {s}x{s} input, got {crops.shape[-2:]}")
    return crops.reshape(crops.shape[:-2] + (s * s,))


def features_of(params, x):
    """Pre-head features for flattened inputs ``x`` of shape (..., D_in)."""
    if params.feature_weights is None:
        return x
    return np.maximum(x @ params.feature_weights + params.feature_bias, 0.0)


def head(params, features):
    return features @ params.head_weights + params.head_bias


def forward(params, crops):
    """Features and logits for one crop (s, s) or a stack (n, s, s)."""
    feats = features_of(params, _flatten(params, crops))
    return feats, head(params, feats)


def predict_proba(params, images):
    """Plain inference: center-crop to the model input side, then softmax."""
    _, logits = forward(params, center_crop(images, params.input_side))
    return softmax(logits)


def batch_loss_and_grads(params, x, targets, loss_cfg, weights=None):
    """Mean loss over a batch and its gradient for every parameter array.

    ``x`` holds flattened crops (B, D_in), ``targets`` the target
    distributions (B, K).
    """
    b = x.shape[0]
    if params.feature_weights is not None:
        pre = x @ params.feature_weights + params.feature_bias
        feats = np.maximum(pre, 0.0)
    else:
        feats = x
    logits = head(params, feats)
    values, g_logits = batch_loss_with_grad(loss_cfg, logits, targets, weights)
    g_logits = g_logits / b
    grads = {}
    if params.feature_weights is not None:
        g_feats = (g_logits @ params.head_weights.T) * (pre > 0)
        grads["feature_weights"] = x.T @ g_feats
        grads["feature_bias"] = g_feats.sum(axis=0)
    grads["head_weights"] = feats.T @ g_logits
    grads["head_bias"] = g_logits.sum(axis=0)
    return float(values.mean()), values, grads


def mean_error(params, split):
    preds = top1(predict_proba(params, split.pixels))
    return float(np.mean(preds != split.true_labels))


def plateau_step(state, new_val_error, cfg):
    """Return a new state after observing one validation error.

    An error below ``best - min_delta`` counts as improvement. After
    ``patience`` epochs without improvement the learning rate is multiplied
    by ``lr_factor`` and the counter restarts.
    """
    if not 0 <= new_val_error <= 1:
        raise InvalidInputError("validation error must lie in [0, 1]")
    best, waited, reductions = state.best_val_error, state.epochs_since_improvement, state.num_reductions
    if new_val_error < best - cfg.min_delta:
        best, waited = new_val_error, 0
    else:
        waited += 1
    if waited >= cfg.patience:
        reductions += 1
        waited = 0
    return replace(
        state,
        best_val_error=best,
        epochs_since_improvement=waited,
        num_reductions=reductions,
        current_lr=cfg.initial_lr * cfg.lr_factor ** reductions,
    )


def _loss_weights(dataset, loss_cfg):
    if loss_cfg.kind in (LossKind.BCE, LossKind.BSCE):
        return class_weights(class_counts(dataset))
    return None


def train(dataset, model, cfg, resume=None):
    """SGD over the training split, one plateau check per epoch.

    Each epoch shuffles with a generator seeded by ``(cfg.seed, epoch)``, so
    resuming from a checkpoint reproduces uninterrupted training exactly.
    ``model`` is not modified.
    """
    if dataset.num_classes != model.num_classes:
        raise ShapeError(f"dataset has {dataset.num_classes} classes, model has {model.num_classes}")
    if resume is None:
        state = TrainState.fresh(model.copy(), cfg)
    else:
        state = replace(resume, params=resume.params.copy(), history=list(resume.history))
    params = state.params

    x = _flatten(params, center_crop(dataset.train.pixels, params.input_side))
    targets = one_hot(dataset.train.observed_labels, dataset.num_classes)
    weights = _loss_weights(dataset, cfg.loss)
    n = len(x)

    for epoch in range(len(state.history) + 1, cfg.epochs + 1):
        lr = state.current_lr
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    _, values, grads = batch_loss_and_grads(params, x[idx], targets[idx], cfg.loss, weights)
            except InvalidInputError as exc:
                # non-finite logits
                raise TrainingDivergedError(epoch) from exc
            if not np.all(np.isfinite(values)):
                raise TrainingDivergedError(epoch)
            total += float(values.sum())
            for name, g in grads.items():
                arr = getattr(params, name)
                arr -= lr * g
        train_loss = total / n
        if not math.isfinite(train_loss):
            raise TrainingDivergedError(epoch)
        val_error = mean_error(params, dataset.val)
        before = state.num_reductions
        state = plateau_step(state, val_error, cfg)
        state.history.append(EpochRecord(epoch, train_loss, val_error, lr, state.num_reductions > before))
        log.debug("epoch %d loss %.5f val_error %.4f lr %g", epoch, train_loss, val_error, lr)
    return state


# checkpoint layout (little-endian):
#   magic | u32 len | config JSON | u32 input_side, d_in, hidden, K
#   | f64 weight blocks | f64 lr, best | u32 waited, reductions, n_hist
#   | n_hist x (u32 epoch, f64 loss, f64 val_error, f64 lr, u8 reduced) | u32 crc32
_SHAPES = struct.Struct("<4I")
_SCALARS = struct.Struct("<2d3I")
_RECORD = struct.Struct("<I3dB")


def save_checkpoint(state, path, config=None):
    p = state.params
    d_in = p.input_side * p.input_side
    cfg_json = json.dumps(config.to_dict() if config is not None else {}, sort_keys=True).encode()
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(cfg_json)), cfg_json]
    parts.append(_SHAPES.pack(p.input_side, d_in, p.hidden_dim, p.num_classes))
    for arr in p.arrays().values():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    parts.append(
        _SCALARS.pack(
            state.current_lr,
            state.best_val_error,
            state.epochs_since_improvement,
            state.num_reductions,
            len(state.history),
        )
    )
    for rec in state.history:
        parts.append(_RECORD.pack(rec.epoch, rec.train_loss, rec.val_error, rec.lr, int(rec.lr_reduced)))
    body = b"".join(parts)
    try:
        with open(path, "wb") as fh:
            fh.write(body + struct.pack("<I", zlib.crc32(body)))
    except OSError as exc:
        raise StorageIOError(f"cannot write checkpoint to {path}: {exc}") from exc


class _Reader:
    def __init__(self, buf, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CorruptDataError(f"{self.path}: truncated checkpoint")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, st):
        return st.unpack(self.take(st.size))

    def array(self, shape):
        n = int(np.prod(shape))
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)


def load_checkpoint(path):
    """Read a checkpoint; returns ``(state, config_dict)``."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise StorageIOError(f"cannot read checkpoint from {path}: {exc}") from exc
    if len(raw) < len(CHECKPOINT_MAGIC):
        raise CorruptDataError(f"{path}: file too short for a checkpoint header")
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise VersionMismatchError(f"{path}: unrecognised header, expected {CHECKPOINT_MAGIC!r}")
    if len(raw) < len(CHECKPOINT_MAGIC) + 4:
        raise CorruptDataError(f"{path}: truncated checkpoint")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptDataError(f"{path}: checksum mismatch")

    r = _Reader(body, path)
    r.take(len(CHECKPOINT_MAGIC))
    (n_cfg,) = r.unpack(struct.Struct("<I"))
    try:
        config = json.loads(r.take(n_cfg).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptDataError(f"{path}: unreadable config echo") from exc
    side, d_in, hidden, k = r.unpack(_SHAPES)
    if d_in != side * side or k < 2:
        raise CorruptDataError(f"{path}: inconsistent shapes")
    fw = fb = None
    d_feat = d_in
    if hidden:
        fw, fb = r.array((d_in, hidden)), r.array((hidden,))
        d_feat = hidden
    hw, hb = r.array((d_feat, k)), r.array((k,))
    params = ModelParams(head_weights=hw, head_bias=hb, input_side=side, feature_weights=fw, feature_bias=fb)
    lr, best, waited, reductions, n_hist = r.unpack(_SCALARS)
    history = []
    for _ in range(n_hist):
        ep, loss, err, rec_lr, reduced = r.unpack(_RECORD)
        history.append(EpochRecord(ep, loss, err, rec_lr, bool(reduced)))
    if r.pos != len(body):
        raise CorruptDataError(f"{path}: trailing bytes after checkpoint body")
    state = TrainState(
        params=params,
        current_lr=lr,
        best_val_error=best,
        epochs_since_improvement=waited,
        num_reductions=reductions,
        history=history,
    )
    return state, config
