"""
Majority-vote ensembles
=======================

Each member casts its top-1 class. Ties in the vote count go to the class
with the larger summed probability, then to the lower index.
"""

import numpy as np

from bsce.data import DatasetSpec, synth_dataset
from bsce.ensemble import ensemble_eval, evaluate, top1_vote, train_cell
from bsce.trainer import TrainConfig

print(top1_vote([[0.9, 0.1], [0.4, 0.6], [0.2, 0.8]]))  # two votes for class 1
print(top1_vote([[0.55, 0.45], [0.1, 0.9]]))  # 1-1 tie, class 1 has more mass

ds = synth_dataset(DatasetSpec(num_classes=8, head_count=150, imbalance_ratio=10, seed=3))
members = [train_cell(ds, TrainConfig(), "bsce", seed=s, hidden_dim=32).params for s in (0, 1, 2)]
single = [evaluate(m, ds.test).mean_top1_error for m in members]
print("member errors:", single, " mean", round(float(np.mean(single)), 4))
print("ensemble error:", ensemble_eval(members, ds.test).mean_top1_error)
print("duplicates change nothing:", ensemble_eval([members[0]] * 3, ds.test).mean_top1_error == single[0])
