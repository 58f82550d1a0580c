"""Multi-scale resize + center-crop test-time augmentation."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .imaging import bilinear_resize, center_crop
from .prob_core import softmax
from .trainer import forward, head

__all__ = [
    "DESK_TTA",
    "FULL_SCALE_TTA",
    "TtaConfig",
    "TtaMode",
    "bilinear_resize",
    "center_crop",
    "tta_predict",
    "tta_predict_batch",
]


class TtaMode(str, enum.Enum):
    AVERAGE_FEATURES = "average_features"
    AVERAGE_PROBS = "average_probs"


@dataclass(frozen=True)
class TtaConfig:
    resize_sides: tuple = (26, 28, 30, 32, 36)
    crop_side: int = 24
    mode: TtaMode = TtaMode.AVERAGE_FEATURES

    def __post_init__(self):
        object.__setattr__(self, "resize_sides", tuple(int(s) for s in self.resize_sides))
        try:
            object.__setattr__(self, "mode", TtaMode(self.mode))
        except ValueError:
            raise ConfigError(f"unknown TTA mode {self.mode!r}") from None
        if not self.resize_sides:
            raise ConfigError("resize_sides must not be empty")
        if self.crop_side < 1:
            raise ConfigError("crop_side must be positive")
        small = [s for s in self.resize_sides if s < self.crop_side]
        if small:
            raise ConfigError(f"resize sides {small} are smaller than crop side {self.crop_side}")


DESK_TTA = TtaConfig()
# 384/412/424/436/464 resized, cropped to a 331 network input
FULL_SCALE_TTA = TtaConfig(resize_sides=(384, 412, 424, 436, 464), crop_side=331)


def tta_predict_batch(params, images, cfg):
    """Class probabilities for a stack of images (n, H, W) under ``cfg``.

    Views are reduced in ascending order of resize side, which makes the
    result independent of the order ``cfg.resize_sides`` lists them in.
    """
    if cfg.crop_side != params.input_side:
        raise ShapeError(f"crop side {cfg.crop_side} differs from model input side {params.input_side}")
    images = np.asarray(images)
    total = None
    for side in sorted(cfg.resize_sides):
        view = center_crop(bilinear_resize(images, side), cfg.crop_side)
        feats, logits = forward(params, view)
        contrib = feats if cfg.mode is TtaMode.AVERAGE_FEATURES else softmax(logits)
        total = contrib if total is None else total + contrib
    mean = total / len(cfg.resize_sides)
    if cfg.mode is TtaMode.AVERAGE_FEATURES:
        return softmax(head(params, mean))
    return mean


def tta_predict(params, image, cfg):
    """Class probabilities for a single (H, W) image."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ShapeError("tta_predict takes a single 2-D image; use tta_predict_batch for stacks")
    return tta_predict_batch(params, image[None], cfg)[0]
