"""Square-image resizing and cropping.

Images are ``(..., H, W)`` arrays, so a stack of images is resized or cropped
in one call.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError


def _axis_plan(src, dst):
    # corner-aligned: output index i samples source coordinate i*(src-1)/(dst-1)
    pos = np.arange(dst, dtype=np.float64) * (src - 1) / (dst - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, src - 1)
    frac = pos - lo
    return lo, hi, frac


def _lerp(a, b, t):
    # a + t*(b - a) keeps constants exact; clip guards the last-ulp overshoot
    out = a + t * (b - a)
    return np.clip(out, np.minimum(a, b), np.maximum(a, b))


def bilinear_resize(image, target_side):
    """Resize square image(s) to ``target_side`` by corner-aligned bilinear interpolation.

    Corner pixels of the input map exactly onto corner pixels of the output,
    and every output value is a convex combination of at most four input
    pixels, so the output range never exceeds the input range.
    """
    image = np.asarray(image)
    if image.ndim < 2:
        raise InvalidInputError("image must have at least two dimensions")
    h, w = image.shape[-2:]
    if h != w:
        raise InvalidInputError(f"expected a square image, got {h}x{w}")
    if h < 2 or target_side < 2:
        raise InvalidInputError("source and target sides must both be at least 2")
    if target_side == h:
        return image.copy()
    dtype = image.dtype if image.dtype.kind == "f" else np.float64
    img = image.astype(np.float64, copy=False)

    lo, hi, t = _axis_plan(h, target_side)
    rows = _lerp(img[..., lo, :], img[..., hi, :], t[:, None])
    lo, hi, t = _axis_plan(w, target_side)
    out = _lerp(rows[..., :, lo], rows[..., :, hi], t)
    return out.astype(dtype, copy=False)


def crop_offset(side, crop_side):
    return (side - crop_side) // 2


def center_crop(image, crop_side):
    """Central ``crop_side`` x ``crop_side`` window, offset ``floor((H - c) / 2)``."""
    image = np.asarray(image)
    if image.ndim < 2:
        raise InvalidInputError("image must have at least two dimensions")
    h, w = image.shape[-2:]
    if crop_side < 1:
        raise InvalidInputError("crop side must be positive")
    if crop_side > min(h, w):
        raise InvalidInputError(f"crop side {crop_side} exceeds image size {h}x{w}")
    top = crop_offset(h, crop_side)
    left = crop_offset(w, crop_side)
    return image[..., top:top + crop_side, left:left + crop_side]
