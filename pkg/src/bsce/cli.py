"""Command-line entry point: ``bsce {synth,train,eval,tta,ensemble,sweep}``.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .data import class_counts, load_dataset, save_dataset, synth_dataset
from .ensemble import SweepReport, ensemble_eval, evaluate, format_loss_table, loss_sweep, tta_sweep
from .errors import ConfigError, InfiniteLossError, PersistenceError, ShapeError, TrainingDivergedError
from .losses import class_weights
from .trainer import init_model, load_checkpoint, save_checkpoint, train

log = logging.getLogger("bsce")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

DATASET_FILE = "dataset.bin"
CHECKPOINT_FILE = "checkpoint.bin"
HISTORY_FILE = "history.csv"
REPORT_FILE = "report.csv"


def _require(path, what):
    if not path:
        raise ConfigError(f"io.{what} is not set")
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return path


def _emit(report, out, text=None):
    report.to_csv(out / REPORT_FILE)
    sys.stdout.write(report.to_text() if text is None else text)


def cmd_synth(cfg, out):
    ds = synth_dataset(cfg.dataset)
    save_dataset(ds, out / DATASET_FILE)
    counts = class_counts(ds)
    weights = class_weights(counts) if np.all(counts > 0) else None
    lines = [f"{'class':>5}  {'n(k)':>6}  {'w(k)':>9}"]
    for k, n in enumerate(counts):
        w = f"{weights.weights[k]:9.5f}" if weights is not None else f"{'-':>9}"
        lines.append(f"{k:>5}  {n:>6}  {w}")
    lines.append(f"N = {counts.sum()}, K = {ds.num_classes}")
    sys.stdout.write("\n".join(lines) + "\n")


def _history_csv(state, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_error", "lr", "lr_reduced"])
        for r in state.history:
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.val_error), repr(r.lr), int(r.lr_reduced)])


def cmd_train(cfg, out):
    ds = load_dataset(_require(cfg.io.dataset, "dataset"))
    t = cfg.train
    log.info(
        "training %s: lr %g, factor %g, patience %d, epochs %d, batch %d",
        t.loss.kind.value, t.initial_lr, t.lr_factor, t.patience, t.epochs, t.batch_size,
    )
    model = init_model(cfg.input_side, cfg.hidden_dim, ds.num_classes, t.seed)
    state = train(ds, model, t)
    save_checkpoint(state, out / CHECKPOINT_FILE, t)
    _history_csv(state, out / HISTORY_FILE)
    final = state.history[-1].val_error if state.history else float("nan")
    sys.stdout.write(f"epochs {len(state.history)}  final val error {final:.4f}  lr {state.current_lr:g}\n")


def _params(path):
    state, _ = load_checkpoint(path)
    return state.params


def cmd_eval(cfg, out):
    ds = load_dataset(_require(cfg.io.dataset, "dataset"))
    params = _params(_require(cfg.io.checkpoint, "checkpoint"))
    split = cfg.sweep.split
    _emit(SweepReport(rows=[evaluate(params, ds.split(split), split_name=split)]), out)


def cmd_tta(cfg, out):
    ds = load_dataset(_require(cfg.io.dataset, "dataset"))
    params = _params(_require(cfg.io.checkpoint, "checkpoint"))
    split = cfg.sweep.split
    report = tta_sweep(params, ds.split(split), cfg.tta.resize_sides, cfg.tta.crop_side, cfg.tta.mode, split)
    _emit(report, out)


def cmd_ensemble(cfg, out):
    ds = load_dataset(_require(cfg.io.dataset, "dataset"))
    paths = cfg.io.checkpoints or ((cfg.io.checkpoint,) if cfg.io.checkpoint else ())
    if not paths:
        raise ConfigError("io.checkpoints is empty")
    models = [_params(_require(p, "checkpoint")) for p in paths]
    split = cfg.sweep.split
    tta = cfg.tta if cfg.sweep.ensemble_tta else None
    row = ensemble_eval(models, ds.split(split), tta, label="model" if len(models) == 1 else "ensemble", split_name=split)
    _emit(SweepReport(rows=[row]), out)


def cmd_sweep(cfg, out):
    ds = load_dataset(_require(cfg.io.dataset, "dataset"))
    report = loss_sweep(ds, cfg.train, cfg.sweep.kinds, cfg.sweep.seeds, cfg.hidden_dim, cfg.input_side)
    _emit(report, out, format_loss_table(report, "test", cfg.sweep.kinds))


COMMANDS = {
    "synth": (cmd_synth, "generate the synthetic dataset and print class counts and weights"),
    "train": (cmd_train, "train one model; writes checkpoint and per-epoch history"),
    "eval": (cmd_eval, "top-1 error of one checkpoint"),
    "tta": (cmd_tta, "per-side and combined test-time augmentation errors"),
    "ensemble": (cmd_ensemble, "majority-vote error of several checkpoints"),
    "sweep": (cmd_sweep, "train and evaluate every (loss, seed) pair"),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bsce",
        description="Train and evaluate balanced symmetric cross entropy models.",
        epilog="exit codes: 0 ok, 1 configuration, 2 I/O, 3 numeric. Log level via BSCE_LOG_LEVEL.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=".", help="output directory (default: current directory)")
        p.add_argument("--preset", choices=["paper-scales"], help="replace the TTA sides with a named preset")
    return parser


def _setup_logging():
    level = os.environ.get("BSCE_LOG_LEVEL", "error").lower()
    if level not in LOG_LEVELS:
        raise ConfigError(f"BSCE_LOG_LEVEL must be one of {sorted(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        cfg = load_config(args.config, args.preset)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command][0](cfg, out)
    except (ConfigError, ShapeError) as exc:
        print(f"bsce: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PersistenceError, OSError) as exc:
        print(f"bsce: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TrainingDivergedError, InfiniteLossError, FloatingPointError) as exc:
        print(f"bsce: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
