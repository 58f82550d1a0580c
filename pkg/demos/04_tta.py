"""
Multi-scale test-time augmentation
==================================

Each test image is resized to several sides, center-cropped back to the model
input and the views are pooled, either in feature space or as probabilities.
"""

import numpy as np

from bsce.data import DatasetSpec, synth_dataset
from bsce.ensemble import train_cell, tta_sweep
from bsce.trainer import TrainConfig, predict_proba
from bsce.tta import TtaConfig, bilinear_resize, center_crop, tta_predict_batch

# corner-aligned resize keeps the corners and never leaves the input range
img = np.arange(16, dtype=float).reshape(4, 4)
big = bilinear_resize(img, 7)
print("corners kept:", big[0, 0], big[0, -1], big[-1, 0], big[-1, -1])
print("crop 3 of 7 starts at offset", (7 - 3) // 2, "->", center_crop(big, 3)[0, 0] == big[2, 2])

ds = synth_dataset(DatasetSpec(num_classes=8, head_count=150, imbalance_ratio=10, seed=2))
params = train_cell(ds, TrainConfig(), "bsce", seed=2).params

for mode in ("average_features", "average_probs"):
    print(f"-- {mode}")
    print(tta_sweep(params, ds.test, [26, 28, 30, 36], crop_side=24, mode=mode).to_text())

# one view at the native side is exactly plain inference
same = tta_predict_batch(params, ds.test.pixels, TtaConfig(resize_sides=(32,), crop_side=24))
print("single view == plain:", np.array_equal(same, predict_proba(params, ds.test.pixels)))
