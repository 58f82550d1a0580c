"""
Losses on a single prediction
=============================

Cross entropy, its class-balanced variant, reverse cross entropy and the two
symmetric mixtures, evaluated on one softmax output.
"""

import numpy as np

from bsce.losses import LossConfig, bce, bsce, ce, class_weights, loss_with_grad, rce, sce
from bsce.prob_core import one_hot, softmax

# a confident prediction for class 0 and a label that says class 2
p = softmax(np.array([2.0, 0.5, -1.0]))
q = one_hot(2, 3)
print("p =", np.round(p, 4))

# balancing weights from a long-tailed count vector: rare classes weigh more
w = class_weights([500, 120, 10])
print("w(k) =", np.round(w.weights, 3), " exact mass", w.weight_mass(), "== N", w.total)

print(f"ce   {ce(p, q):.4f}")
print(f"bce  {bce(p, q, w):.4f}")
print(f"rce  {rce(p, q):.4f}   bounded by -A = 4")
print(f"sce  {sce(p, q):.4f}")
print(f"bsce {bsce(p, q, w):.4f}")

# gradients come back with respect to the logits
res = loss_with_grad(LossConfig(kind="bsce"), np.array([2.0, 0.5, -1.0]), q, w)
print("d bsce / dz =", np.round(res.grad_logits, 4), " sums to", round(res.grad_logits.sum(), 12))
