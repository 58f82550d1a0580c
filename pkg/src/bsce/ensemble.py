"""Top-1 error, top-1 vote ensembling and the loss / TTA sweep harnesses."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import BsceError, ConfigError, InvalidInputError, ShapeError, TrainingDivergedError
from .prob_core import top1
from .trainer import init_model, predict_proba, train
from .tta import TtaConfig, tta_predict_batch

log = logging.getLogger(__name__)

# full-scale reference numbers, printed as context only
REFERENCE_LOSS_ERRORS = {"ce": 0.1530, "bce": 0.1430, "sce": 0.1492, "bsce": 0.1407}
REFERENCE_SCALE_ERRORS = {"384": 0.1407, "412": 0.1386, "424": 0.1384, "436": 0.1383, "464": 0.1425, "tta": 0.1354}
REFERENCE_ENSEMBLE_ERROR = 0.1515

CSV_HEADER = ("label", "split", "mean_top1_error", "n", "seed")


class SweepRow(NamedTuple):
    label: str
    split: str
    mean_top1_error: float
    n: int
    seed: int | None = None


@dataclass
class SweepReport:
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    states: dict = field(default_factory=dict, repr=False)

    def select(self, label=None, split=None, seed=...):
        return [
            r for r in self.rows
            if (label is None or r.label == label)
            and (split is None or r.split == split)
            and (seed is ... or r.seed == seed)
        ]

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([r.label, r.split, repr(float(r.mean_top1_error)), r.n, "" if r.seed is None else r.seed])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_text(self):
        cells = [CSV_HEADER] + [
            (r.label, r.split, f"{r.mean_top1_error:.4f}", str(r.n), "-" if r.seed is None else str(r.seed))
            for r in self.rows
        ]
        widths = [max(len(c[i]) for c in cells) for i in range(len(CSV_HEADER))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines + list(self.notes)) + "\n"


@dataclass(eq=False)
class PredictionSet:
    """Per-model class probabilities, shape (models, samples, K)."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 3:
            raise ShapeError("prediction set must have shape (models, samples, classes)")
        if self.probs.shape[0] < 1:
            raise ConfigError("prediction set needs at least one model")

    @property
    def votes(self):
        return top1(self.probs)


def mean_top1_error(predictions, labels):
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise InvalidInputError("predictions and labels must be 1-D and of equal length")
    if predictions.size == 0:
        raise InvalidInputError("need at least one prediction")
    return float(np.count_nonzero(predictions != labels)) / predictions.size


def vote(prediction_set):
    """Top-1 vote for every sample of a :class:`PredictionSet`.

    Plurality of the members' argmax classes wins. Ties go to the tied class
    with the largest probability summed over members, then to the lowest index.
    """
    probs = prediction_set.probs
    votes = top1(probs)
    counts = np.zeros(probs.shape[1:], dtype=np.int64)
    for member_votes in votes:
        counts[np.arange(len(member_votes)), member_votes] += 1
    tied = counts == counts.max(axis=1, keepdims=True)
    winners = np.argmax(tied, axis=1)
    for i in np.flatnonzero(tied.sum(axis=1) > 1):
        # fsum is correctly rounded, so equal sums compare equal in any member order
        cands = np.flatnonzero(tied[i])
        mass = [math.fsum(probs[:, i, c]) for c in cands]
        winners[i] = cands[int(np.argmax(mass))]
    return winners


def top1_vote(model_probs):
    """Ensemble decision for one sample given each member's probability vector."""
    arrs = [np.asarray(p, dtype=np.float64) for p in model_probs]
    if not arrs:
        raise ConfigError("need at least one model")
    if any(a.ndim != 1 for a in arrs) or len({a.shape[0] for a in arrs}) != 1:
        raise ShapeError("all members must give one probability vector over the same classes")
    return int(vote(PredictionSet(np.stack(arrs)[:, None, :]))[0])


def member_probs(params, images, tta_cfg=None):
    if tta_cfg is None:
        return predict_proba(params, images)
    return tta_predict_batch(params, images, tta_cfg)


def ensemble_eval(models, split, tta_cfg=None, label="ensemble", split_name="test", seed=None):
    """Vote the members' predictions on ``split`` and report the top-1 error."""
    if not models:
        raise ConfigError("ensemble needs at least one model")
    ks = {m.num_classes for m in models}
    if len(ks) != 1:
        raise ShapeError(f"members disagree on the number of classes: {sorted(ks)}")
    pset = PredictionSet(np.stack([member_probs(m, split.pixels, tta_cfg) for m in models]))
    err = mean_top1_error(vote(pset), split.true_labels)
    return SweepRow(label, split_name, err, len(split), seed)


def evaluate(params, split, tta_cfg=None, label="model", split_name="test", seed=None):
    preds = top1(member_probs(params, split.pixels, tta_cfg))
    return SweepRow(label, split_name, mean_top1_error(preds, split.true_labels), len(split), seed)


def train_cell(dataset, base_cfg, kind, seed, hidden_dim=0, input_side=24):
    """Train one model for a (loss kind, seed) cell; init and shuffling share the seed."""
    cfg = replace(base_cfg, loss=replace(base_cfg.loss, kind=kind), seed=seed)
    model = init_model(input_side, hidden_dim, dataset.num_classes, seed)
    return train(dataset, model, cfg)


def loss_sweep(dataset, base_cfg, kinds=("ce", "bce", "sce", "bsce"), seeds=(0,), hidden_dim=0, input_side=24):
    """Train one model per (kind, seed) and report val/test error for each.

    Rows come in (kind, seed) order followed by per-kind mean rows with no
    seed. Trained states are kept in ``report.states[(kind, seed)]``.
    """
    report = SweepReport()
    for kind in kinds:
        for seed in seeds:
            try:
                state = train_cell(dataset, base_cfg, kind, seed, hidden_dim, input_side)
            except TrainingDivergedError as exc:
                raise TrainingDivergedError(exc.epoch, f"sweep cell {kind}/seed {seed}: {exc}") from exc
            except BsceError as exc:
                raise type(exc)(f"sweep cell {kind}/seed {seed}: {exc}") from exc
            report.states[(kind, seed)] = state
            for split_name in ("val", "test"):
                report.rows.append(
                    evaluate(state.params, dataset.split(split_name), label=kind, split_name=split_name, seed=seed)
                )
            log.info("sweep %s seed %s done", kind, seed)
    for kind in kinds:
        for split_name in ("val", "test"):
            errs = [r.mean_top1_error for r in report.select(kind, split_name) if r.seed is not None]
            n = report.select(kind, split_name)[0].n
            report.rows.append(SweepRow(kind, split_name, float(np.mean(errs)), n, None))
    ref = "  ".join(f"{k} {v:.4f}" for k, v in REFERENCE_LOSS_ERRORS.items())
    report.notes.append(f"reference (full-scale, not reproduced here): {ref}")
    return report


def tta_sweep(params, split, resize_sides, crop_side=None, mode="average_features", split_name="test"):
    """One row per single resize side plus one row for all sides combined."""
    crop_side = params.input_side if crop_side is None else crop_side
    report = SweepReport()
    for side in resize_sides:
        cfg = TtaConfig(resize_sides=(side,), crop_side=crop_side, mode=mode)
        report.rows.append(evaluate(params, split, cfg, label=str(side), split_name=split_name))
    cfg = TtaConfig(resize_sides=tuple(resize_sides), crop_side=crop_side, mode=mode)
    report.rows.append(evaluate(params, split, cfg, label="tta", split_name=split_name))
    ref = "  ".join(f"{k} {v:.4f}" for k, v in REFERENCE_SCALE_ERRORS.items())
    report.notes.append(f"reference (full-scale, not reproduced here): {ref}")
    return report


def format_loss_table(report, split="test", kinds=None):
    """Wide layout with one column per loss kind and one row per seed plus the mean."""
    if kinds is None:
        kinds = list(dict.fromkeys(r.label for r in report.rows))
    seeds = sorted({r.seed for r in report.rows if r.seed is not None})

    def cell(kind, seed):
        rows = report.select(kind, split, seed)
        return f"{rows[0].mean_top1_error:.4f}" if rows else "-"

    header = ["seed"] + list(kinds)
    body = [[str(s)] + [cell(k, s) for k in kinds] for s in seeds]
    body.append(["mean"] + [cell(k, None) for k in kinds])
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in [header] + body]
    return "\n".join([f"mean top-1 error ({split})"] + lines + list(report.notes)) + "\n"
