"""Synthetic long-tailed, noisily labelled image datasets and their file format.

Every class owns a smooth random prototype image; samples are the prototype
plus Gaussian pixel noise, clipped to [0, 1]. The training split follows an
exponential long-tail profile and may carry label noise. Validation and test
splits are class balanced and always clean.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple

import numpy as np

from .errors import (
    CorruptDataError,
    InvalidInputError,
    InvalidSpecError,
    StorageIOError,
    VersionMismatchError,
)
from .imaging import bilinear_resize

MAGIC = b"BSCEDS1"
NOISE_KINDS = ("symmetric", "pairwise")
_HEADER = struct.Struct("<6I")


class LabeledImage(NamedTuple):
    pixels: np.ndarray
    true_label: int
    observed_label: int


@dataclass(frozen=True)
class DatasetSpec:
    num_classes: int = 20
    head_count: int = 500
    imbalance_ratio: float = 50.0
    noise_rate: float = 0.4
    image_side: int = 32
    seed: int = 0
    val_per_class: int = 50
    test_per_class: int = 50
    pixel_noise: float = 0.35
    prototype_grid: int = 4
    noise_kind: str = "symmetric"

    def __post_init__(self):
        if self.num_classes < 2:
            raise InvalidSpecError("num_classes must be at least 2")
        if self.head_count < 1:
            raise InvalidSpecError("head_count must be positive")
        if not self.imbalance_ratio >= 1:
            raise InvalidSpecError("imbalance_ratio must be >= 1")
        if self.head_count / self.imbalance_ratio < 1:
            raise InvalidSpecError(
                f"tail class would be empty: head_count / imbalance_ratio = "
                f"{self.head_count / self.imbalance_ratio:.3g} < 1"
            )
        if not 0 <= self.noise_rate < 1:
            raise InvalidSpecError("noise_rate must lie in [0, 1)")
        if self.image_side < 2:
            raise InvalidSpecError("image_side must be at least 2")
        if self.val_per_class < 1 or self.test_per_class < 1:
            raise InvalidSpecError("val_per_class and test_per_class must be positive")
        if self.pixel_noise < 0:
            raise InvalidSpecError("pixel_noise must be non-negative")
        if not 2 <= self.prototype_grid <= self.image_side:
            raise InvalidSpecError("prototype_grid must lie in [2, image_side]")
        if self.noise_kind not in NOISE_KINDS:
            raise InvalidSpecError(f"noise_kind must be one of {NOISE_KINDS}")


@dataclass(eq=False)
class Split:
    """A block of images with their true and observed labels."""

    pixels: np.ndarray
    true_labels: np.ndarray
    observed_labels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
        self.observed_labels = np.asarray(self.observed_labels, dtype=np.int64)
        n = len(self.pixels)
        if self.pixels.ndim != 3 or self.true_labels.shape != (n,) or self.observed_labels.shape != (n,):
            raise InvalidInputError("split arrays have inconsistent shapes")

    def __len__(self):
        return len(self.pixels)

    def __getitem__(self, i):
        return LabeledImage(self.pixels[i], int(self.true_labels[i]), int(self.observed_labels[i]))

    def __iter__(self) -> Iterator[LabeledImage]:
        return (self[i] for i in range(len(self)))

    def equals(self, other):
        return (
            self.pixels.shape == other.pixels.shape
            and np.array_equal(self.pixels, other.pixels)
            and np.array_equal(self.true_labels, other.true_labels)
            and np.array_equal(self.observed_labels, other.observed_labels)
        )


@dataclass(eq=False)
class Dataset:
    train: Split
    val: Split
    test: Split
    num_classes: int
    spec: DatasetSpec | None = field(default=None, compare=False)

    def split(self, name):
        if name not in ("train", "val", "test"):
            raise InvalidInputError(f"unknown split {name!r}")
        return getattr(self, name)

    @property
    def image_side(self):
        return self.train.pixels.shape[-1]

    def equals(self, other):
        return (
            self.num_classes == other.num_classes
            and self.train.equals(other.train)
            and self.val.equals(other.val)
            and self.test.equals(other.test)
        )


def long_tail_counts(head_count, imbalance_ratio, num_classes):
    """``round(head * ratio ** (-k / (K - 1)))`` for each class k, halves rounded up."""
    k = np.arange(num_classes, dtype=np.float64)
    raw = head_count * np.power(float(imbalance_ratio), -k / (num_classes - 1))
    counts = np.floor(raw + 0.5).astype(np.int64)
    if np.any(counts < 1):
        raise InvalidSpecError("long-tail profile leaves a class with no samples")
    return counts


def _seeds(spec):
    return np.random.SeedSequence(spec.seed).spawn(2)


def _prototypes(spec, rng):
    coarse = rng.uniform(0.0, 1.0, size=(spec.num_classes, spec.prototype_grid, spec.prototype_grid))
    return bilinear_resize(coarse, spec.image_side)


def class_prototypes(spec):
    """Per-class prototype images, re-derivable from ``spec`` alone."""
    return _prototypes(spec, np.random.default_rng(_seeds(spec)[0]))


def _draw(rng, prototypes, labels, sigma):
    imgs = prototypes[labels] + sigma * rng.standard_normal((len(labels),) + prototypes.shape[1:])
    return np.clip(imgs, 0.0, 1.0).astype(np.float32)


def synth_dataset(spec):
    """Generate the dataset described by ``spec``, including its label noise."""
    gen_seed, noise_seed = _seeds(spec)
    rng = np.random.default_rng(gen_seed)
    prototypes = _prototypes(spec, rng)
    k = spec.num_classes
    counts = long_tail_counts(spec.head_count, spec.imbalance_ratio, k)

    def make(labels):
        labels = np.asarray(labels, dtype=np.int64)
        return Split(_draw(rng, prototypes, labels, spec.pixel_noise), labels, labels.copy())

    train = make(np.repeat(np.arange(k), counts))
    val = make(np.repeat(np.arange(k), spec.val_per_class))
    test = make(np.repeat(np.arange(k), spec.test_per_class))
    ds = Dataset(train=train, val=val, test=test, num_classes=k, spec=spec)
    if spec.noise_rate > 0:
        ds = inject_noise(ds, spec.noise_rate, noise_seed, kind=spec.noise_kind)
    return ds


def inject_noise(dataset, eta, seed, kind="symmetric"):
    """Corrupt training labels independently with probability ``eta``.

    ``symmetric`` relabels to a uniformly drawn class other than the true one;
    ``pairwise`` relabels class k to (k + 1) mod K. Validation and test splits
    are returned untouched. The input dataset is not modified.
    """
    if not 0 <= eta < 1:
        raise InvalidInputError("noise rate must lie in [0, 1)")
    if kind not in NOISE_KINDS:
        raise InvalidInputError(f"noise kind must be one of {NOISE_KINDS}")
    rng = np.random.default_rng(seed)
    k = dataset.num_classes
    true = dataset.train.true_labels
    n = len(true)
    flip = rng.random(n) < eta
    if kind == "symmetric":
        # draw from the K-1 other classes, skipping over the true one
        other = rng.integers(0, k - 1, size=n)
        other = other + (other >= true)
    else:
        other = (true + 1) % k
    observed = np.where(flip, other, true)
    train = Split(dataset.train.pixels, true.copy(), observed)
    return replace(dataset, train=train)


def class_counts(dataset):
    """Training-set class counts over observed labels."""
    labels = dataset.train.observed_labels
    if len(labels) == 0:
        raise InvalidInputError("training split is empty")
    return np.bincount(labels, minlength=dataset.num_classes).astype(np.int64)


def _record_dtype(h, w):
    return np.dtype([("pixels", "<f4", (h, w)), ("true", "<u4"), ("observed", "<u4")])


def save_dataset(dataset, path):
    h, w = dataset.train.pixels.shape[1:]
    rec = _record_dtype(h, w)
    splits = (dataset.train, dataset.val, dataset.test)
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(_HEADER.pack(dataset.num_classes, h, w, *(len(s) for s in splits)))
            for s in splits:
                if s.pixels.shape[1:] != (h, w):
                    raise InvalidInputError("all splits must share one image size")
                block = np.empty(len(s), dtype=rec)
                block["pixels"] = s.pixels
                block["true"] = s.true_labels
                block["observed"] = s.observed_labels
                fh.write(block.tobytes())
    except OSError as exc:
        raise StorageIOError(f"cannot write dataset to {path}: {exc}") from exc


def load_dataset(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise StorageIOError(f"cannot read dataset from {path}: {exc}") from exc
    if len(raw) < len(MAGIC):
        raise CorruptDataError(f"{path}: file too short for a dataset header")
    if raw[: len(MAGIC)] != MAGIC:
        raise VersionMismatchError(f"{path}: unrecognised header {raw[:len(MAGIC)]!r}, expected {MAGIC!r}")
    offset = len(MAGIC)
    if len(raw) < offset + _HEADER.size:
        raise CorruptDataError(f"{path}: truncated header")
    k, h, w, *sizes = _HEADER.unpack_from(raw, offset)
    offset += _HEADER.size
    rec = _record_dtype(h, w)
    expected = offset + rec.itemsize * sum(sizes)
    if len(raw) != expected:
        raise CorruptDataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    if k < 2 or h < 1 or w < 1:
        raise CorruptDataError(f"{path}: invalid header values K={k} H={h} W={w}")

    splits = []
    for n in sizes:
        block = np.frombuffer(raw, dtype=rec, count=n, offset=offset)
        offset += rec.itemsize * n
        if np.any(block["true"] >= k) or np.any(block["observed"] >= k):
            raise CorruptDataError(f"{path}: label out of range")
        splits.append(
            Split(
                block["pixels"].astype(np.float32),
                block["true"].astype(np.int64),
                block["observed"].astype(np.int64),
            )
        )
    return Dataset(*splits, num_classes=k)

