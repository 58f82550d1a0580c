"""
Training with a plateau schedule
================================

Plain SGD on a softmax-regression head. The learning rate drops by a factor
of ten once validation error stops improving for ``patience`` epochs.
"""

from bsce.data import DatasetSpec, synth_dataset
from bsce.ensemble import evaluate
from bsce.trainer import TrainConfig, init_model, train

ds = synth_dataset(DatasetSpec(num_classes=8, head_count=150, imbalance_ratio=10, seed=1))

for kind in ("ce", "bsce"):
    cfg = TrainConfig(epochs=12, patience=2, seed=1, loss={"kind": kind})
    state = train(ds, init_model(24, 0, ds.num_classes, seed=1), cfg)
    print(f"-- {kind}")
    for rec in state.history:
        mark = "  <- lr reduced" if rec.lr_reduced else ""
        print(f"epoch {rec.epoch:2d}  loss {rec.train_loss:.4f}  val error {rec.val_error:.3f}  lr {rec.lr:g}{mark}")
    print("clean test error:", evaluate(state.params, ds.test).mean_top1_error)
