"""Cross entropy family: CE, balanced CE, reverse CE and their symmetric mixes.

All losses are per sample. Passing 2-D arrays evaluates them row-wise and
returns one value per row; batch reduction (a plain mean) is left to callers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError, InfiniteLossError, InvalidInputError, ShapeError
from .prob_core import (
    DEFAULT_CLAMP_FLOOR,
    check_logits,
    check_probability_vector,
    clamped_log,
)

DEFAULT_ALPHA = 0.4
DEFAULT_BETA = 0.7


class LossKind(str, enum.Enum):
    CE = "ce"
    BCE = "bce"
    RCE = "rce"
    SCE = "sce"
    BSCE = "bsce"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown loss kind {value!r}") from None


@dataclass(frozen=True)
class LossConfig:
    kind: LossKind = LossKind.BSCE
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    clamp_floor: float = DEFAULT_CLAMP_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind.parse(self.kind))
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")
        if not self.clamp_floor < 0:
            raise ConfigError("clamp_floor must be negative")
        if self.kind in (LossKind.SCE, LossKind.BSCE) and self.alpha + self.beta <= 0:
            raise ConfigError("alpha + beta must be positive for symmetric losses")


@dataclass(frozen=True, eq=False)
class ClassWeights:
    """Per-class balancing factors ``w(k) = N / (K * n(k))``."""

    weights: np.ndarray
    counts: np.ndarray
    total: int

    @property
    def num_classes(self):
        return len(self.counts)

    def exact_weights(self):
        """The weights as exact rationals."""
        k = self.num_classes
        return [Fraction(self.total, k * int(n)) for n in self.counts]

    def weight_mass(self):
        """``sum_k n(k) * w(k)`` in exact arithmetic; always equals ``total``."""
        return sum(int(n) * w for n, w in zip(self.counts, self.exact_weights()))

    @classmethod
    def uniform(cls, num_classes):
        return class_weights(np.ones(num_classes, dtype=np.int64))


@dataclass(frozen=True)
class LossResult:
    value: float
    grad_logits: np.ndarray


def class_weights(counts):
    counts = np.asarray(counts)
    if counts.ndim != 1 or counts.size < 2:
        raise InvalidInputError("need a count for each of at least two classes")
    if counts.dtype.kind not in "iu":
        if not np.all(counts == np.round(counts)):
            raise InvalidInputError("class counts must be integers")
        counts = counts.astype(np.int64)
    if np.any(counts < 1):
        raise InvalidInputError("every class needs at least one sample; weight undefined for empty classes")
    counts = counts.astype(np.int64)
    total = int(counts.sum())
    k = counts.size
    weights = total / (k * counts.astype(np.float64))
    weights.setflags(write=False)
    counts.setflags(write=False)
    return ClassWeights(weights=weights, counts=counts, total=total)


def _pair(p, q):
    p = check_probability_vector(p, "p")
    q = check_probability_vector(q, "q")
    if p.shape != q.shape:
        raise ShapeError(f"p has shape {p.shape} but q has shape {q.shape}")
    return p, q


def _weighted_ce(p, q, w):
    support = q > 0
    if np.any(support & (p == 0)):
        raise InfiniteLossError("target puts mass on a class with zero predicted probability")
    logp = np.zeros_like(p)
    logp[support] = np.log(p[support])
    return -np.sum(w * q * logp, axis=-1)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def ce(p, q):
    """Cross entropy ``-sum_k q(k) log p(k)``."""
    p, q = _pair(p, q)
    return _out(_weighted_ce(p, q, 1.0))


def bce(p, q, w):
    """Class-balanced cross entropy ``-sum_k w(k) q(k) log p(k)``."""
    p, q = _pair(p, q)
    if w.num_classes != p.shape[-1]:
        raise ShapeError(f"weights cover {w.num_classes} classes, inputs have {p.shape[-1]}")
    return _out(_weighted_ce(p, q, w.weights))


def rce(p, q, clamp_floor=DEFAULT_CLAMP_FLOOR):
    """Reverse cross entropy ``-sum_k p(k) log q(k)`` with ``log 0`` clamped."""
    p, q = _pair(p, q)
    return _out(-np.sum(p * clamped_log(q, clamp_floor), axis=-1))


def sce(p, q, alpha=DEFAULT_ALPHA, beta=DEFAULT_BETA, clamp_floor=DEFAULT_CLAMP_FLOOR):
    return _out(alpha * np.asarray(ce(p, q)) + beta * np.asarray(rce(p, q, clamp_floor)))


def bsce(p, q, w, alpha=DEFAULT_ALPHA, beta=DEFAULT_BETA, clamp_floor=DEFAULT_CLAMP_FLOOR):
    return _out(alpha * np.asarray(bce(p, q, w)) + beta * np.asarray(rce(p, q, clamp_floor)))


def batch_loss_with_grad(cfg, z, q, w=None):
    """Row-wise loss values and logit gradients for ``p = softmax(z)``.

    Returns ``(values, grads)`` with shapes ``(B,)`` and ``(B, K)``. ``q`` is
    treated as data, so no gradient flows through the clamped log.
    """
    z = np.atleast_2d(check_logits(z))
    q = np.atleast_2d(check_probability_vector(q, "q"))
    if z.shape != q.shape:
        raise ShapeError(f"logits have shape {z.shape} but targets have shape {q.shape}")
    k = z.shape[1]
    kind = LossKind.parse(cfg.kind)
    if w is None:
        if kind in (LossKind.BCE, LossKind.BSCE):
            raise ConfigError(f"{kind.value} needs class weights")
        w = ClassWeights.uniform(k)
    elif w.num_classes != k:
        raise ShapeError(f"weights cover {w.num_classes} classes, logits have {k}")

    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - log_norm
    p = np.exp(logp)

    def weighted_ce(weights):
        wq = weights * q
        value = -np.sum(wq * logp, axis=1)
        grad = wq.sum(axis=1, keepdims=True) * p - wq
        return value, grad

    def reverse_ce():
        c = clamped_log(q, cfg.clamp_floor)
        value = -np.sum(p * c, axis=1)
        grad = -p * (c - np.sum(c * p, axis=1, keepdims=True))
        return value, grad

    if kind is LossKind.CE:
        return weighted_ce(1.0)
    if kind is LossKind.BCE:
        return weighted_ce(w.weights)
    if kind is LossKind.RCE:
        return reverse_ce()
    fwd_v, fwd_g = weighted_ce(1.0 if kind is LossKind.SCE else w.weights)
    rev_v, rev_g = reverse_ce()
    return cfg.alpha * fwd_v + cfg.beta * rev_v, cfg.alpha * fwd_g + cfg.beta * rev_g


def loss_with_grad(cfg, z, q, w=None):
    """Loss value and gradient with respect to the logits of a single sample."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ShapeError("loss_with_grad takes a single logit vector; use batch_loss_with_grad")
    values, grads = batch_loss_with_grad(cfg, z, q, w)
    return LossResult(value=float(values[0]), grad_logits=grads[0])


def loss_value(cfg, p, q, w=None):
    """Evaluate the configured loss on probabilities directly."""
    kind = LossKind.parse(cfg.kind)
    if kind is LossKind.CE:
        return ce(p, q)
    if kind is LossKind.BCE:
        return bce(p, q, w)
    if kind is LossKind.RCE:
        return rce(p, q, cfg.clamp_floor)
    if kind is LossKind.SCE:
        return sce(p, q, cfg.alpha, cfg.beta, cfg.clamp_floor)
    return bsce(p, q, w, cfg.alpha, cfg.beta, cfg.clamp_floor)


__all__ = [
    "ClassWeights",
    "LossConfig",
    "LossKind",
    "LossResult",
    "batch_loss_with_grad",
    "bce",
    "bsce",
    "ce",
    "class_weights",
    "loss_value",
    "loss_with_grad",
    "rce",
    "sce",
]
