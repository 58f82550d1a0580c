"""Probability-vector and logit primitives.

Probability and logit vectors are plain float64 numpy arrays. Functions that
make sense row-wise accept a 2-D array and operate along the last axis.
"""

from __future__ import annotations

import numpy as np

from .errors import ClassIndexError, InvalidInputError

DEFAULT_CLAMP_FLOOR = -4.0
PROB_SUM_TOL = 1e-9


def check_probability_vector(p, name="p"):
    """Return ``p`` as a float64 array after checking it is a distribution.

    Works row-wise for 2-D input.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim not in (1, 2) or p.shape[-1] < 1:
        raise InvalidInputError(f"{name} must be a 1-D or 2-D array of class probabilities")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError(f"{name} has non-finite entries")
    if np.any(p < 0):
        raise InvalidInputError(f"{name} has negative entries")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > PROB_SUM_TOL):
        raise InvalidInputError(f"{name} does not sum to 1")
    return p


def check_logits(z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim not in (1, 2):
        raise InvalidInputError("logits must be a 1-D or 2-D array")
    if z.shape[-1] < 2:
        raise InvalidInputError("need at least two classes")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits must be finite")
    return z


def softmax(z):
    """Numerically stable softmax along the last axis."""
    z = check_logits(z)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def one_hot(y, num_classes):
    """One-hot distribution(s) for class index ``y`` (int or int array)."""
    if num_classes < 1:
        raise InvalidInputError("num_classes must be positive")
    y_arr = np.asarray(y)
    if y_arr.dtype.kind not in "iu":
        raise InvalidInputError("class indices must be integers")
    if np.any(y_arr < 0) or np.any(y_arr >= num_classes):
        raise ClassIndexError(f"class index out of range [0, {num_classes})")
    out = np.zeros(y_arr.shape + (num_classes,), dtype=np.float64)
    if y_arr.ndim == 0:
        out[int(y_arr)] = 1.0
    else:
        out[np.arange(y_arr.size), y_arr.ravel()] = 1.0
    return out


def top1(p):
    """Index of the largest entry; ties go to the lowest index.

    For a 2-D array returns one index per row.
    """
    p = np.asarray(p, dtype=np.float64)
    # np.argmax returns the first occurrence of the maximum
    idx = np.argmax(p, axis=-1)
    return int(idx) if p.ndim == 1 else idx


def clamped_log(q, floor=DEFAULT_CLAMP_FLOOR):
    """Natural log of a probability, replaced by ``floor`` wherever ``q <= e**floor``.

    This gives ``log 0`` a finite value so reverse cross entropy is defined
    for one-hot targets.
    """
    if not floor < 0:
        raise InvalidInputError("clamp floor must be negative")
    q_arr = np.asarray(q, dtype=np.float64)
    if np.any(~np.isfinite(q_arr)) or np.any(q_arr < 0) or np.any(q_arr > 1):
        raise InvalidInputError("probabilities must lie in [0, 1]")
    out = np.full(q_arr.shape, float(floor))
    above = q_arr > np.exp(floor)
    out[above] = np.log(q_arr[above])
    return float(out) if q_arr.ndim == 0 else out
