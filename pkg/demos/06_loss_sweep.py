"""
Comparing losses across seeds
=============================

One model per (loss, seed) on a noisy long-tailed set, reported as a wide
table of clean test error. This is the slowest demo, about twenty seconds.
"""

from bsce.data import DatasetSpec, synth_dataset
from bsce.ensemble import format_loss_table, loss_sweep
from bsce.trainer import TrainConfig

ds = synth_dataset(DatasetSpec(seed=0))
report = loss_sweep(ds, TrainConfig(), kinds=("ce", "bce", "sce", "bsce"), seeds=(0, 1, 2))
print(format_loss_table(report))
