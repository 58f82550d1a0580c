"""
A long-tailed, noisy image benchmark
====================================

Class counts decay geometrically from the head class, then a fraction of the
training labels is flipped uniformly at random.
"""

import numpy as np

from bsce.data import DatasetSpec, class_counts, long_tail_counts, synth_dataset

spec = DatasetSpec(num_classes=10, head_count=200, imbalance_ratio=20, noise_rate=0.4, seed=0)
print("target counts:", long_tail_counts(spec.head_count, spec.imbalance_ratio, spec.num_classes))

ds = synth_dataset(spec)
print("train / val / test sizes:", len(ds.train), len(ds.val), len(ds.test))
print("observed label counts:", class_counts(ds))

# only the training labels are corrupted
flipped = np.mean(ds.train.true_labels != ds.train.observed_labels)
print(f"flipped training labels: {flipped:.3f}")
print("val and test are clean:", np.array_equal(ds.test.true_labels, ds.test.observed_labels))

img, true, observed = ds.train[0]
print("one image:", img.shape, img.dtype, "true", true, "observed", observed)
