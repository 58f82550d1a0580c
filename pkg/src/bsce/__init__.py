"""Class-balanced symmetric cross entropy for noisy, long-tailed image labels.

Pure numpy: losses with analytic logit gradients, a synthetic long-tail
benchmark, an SGD trainer with a plateau schedule, multi-scale test-time
augmentation and majority-vote ensembles.
"""

from .data import Dataset, DatasetSpec, load_dataset, save_dataset, synth_dataset
from .ensemble import ensemble_eval, evaluate, loss_sweep, top1_vote, tta_sweep
from .losses import LossConfig, LossKind, bce, bsce, ce, class_weights, rce, sce
from .prob_core import clamped_log, one_hot, softmax, top1
from .trainer import TrainConfig, init_model, load_checkpoint, save_checkpoint, train
from .tta import TtaConfig, TtaMode, tta_predict

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DatasetSpec",
    "LossConfig",
    "LossKind",
    "TrainConfig",
    "TtaConfig",
    "TtaMode",
    "bce",
    "bsce",
    "ce",
    "clamped_log",
    "class_weights",
    "ensemble_eval",
    "evaluate",
    "init_model",
    "load_checkpoint",
    "load_dataset",
    "loss_sweep",
    "one_hot",
    "rce",
    "save_checkpoint",
    "save_dataset",
    "sce",
    "softmax",
    "synth_dataset",
    "top1",
    "top1_vote",
    "train",
    "tta_predict",
    "tta_sweep",
]
