"""JSON run configuration with strict key checking."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .data import DatasetSpec
from .errors import BsceError, ConfigError, StorageIOError
from .losses import LossConfig, LossKind
from .trainer import TrainConfig
from .tta import FULL_SCALE_TTA, TtaConfig

SECTIONS = ("dataset", "train", "tta", "sweep", "io")
MODEL_KEYS = ("hidden_dim", "input_side")


@dataclass(frozen=True)
class SweepConfig:
    kinds: tuple = ("ce", "bce", "sce", "bsce")
    seeds: tuple = (0, 1, 2, 3, 4)
    split: str = "test"
    ensemble_tta: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kinds", tuple(LossKind.parse(k).value for k in self.kinds))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.kinds or not self.seeds:
            raise ConfigError("sweep needs at least one loss kind and one seed")
        if self.split not in ("train", "val", "test"):
            raise ConfigError(f"unknown split {self.split!r}")


@dataclass(frozen=True)
class IoConfig:
    dataset: str | None = None
    checkpoint: str | None = None
    checkpoints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "checkpoints", tuple(self.checkpoints))


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden_dim: int = 0
    input_side: int = 24
    tta: TtaConfig = field(default_factory=TtaConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    io: IoConfig = field(default_factory=IoConfig)

    def __post_init__(self):
        if self.hidden_dim < 0 or self.input_side < 1:
            raise ConfigError("hidden_dim must be >= 0 and input_side >= 1")
        if self.input_side > self.dataset.image_side:
            raise ConfigError(f"input_side {self.input_side} exceeds image_side {self.dataset.image_side}")


def _keys(cls):
    return {f.name for f in dataclasses.fields(cls)}


def _build(cls, section, values, extra=()):
    if not isinstance(values, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = sorted(set(values) - _keys(cls) - set(extra))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(unknown)}")
    try:
        return cls(**{k: v for k, v in values.items() if k not in extra})
    except BsceError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section!r} section: {exc}") from exc


def parse_config(doc, preset=None):
    """Build a :class:`RunConfig` from a decoded JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")

    train_doc = dict(doc.get("train", {}))
    if not isinstance(train_doc.get("loss", {}), dict):
        raise ConfigError("train.loss must be an object")
    loss = _build(LossConfig, "train.loss", train_doc.pop("loss", {}))
    train = _build(TrainConfig, "train", {**train_doc, "loss": loss}, extra=MODEL_KEYS)
    model = {k: train_doc[k] for k in MODEL_KEYS if k in train_doc}

    tta = _build(TtaConfig, "tta", doc.get("tta", {}))
    if preset == "paper-scales":
        tta = dataclasses.replace(FULL_SCALE_TTA, mode=tta.mode)
    elif preset is not None:
        raise ConfigError(f"unknown preset {preset!r}")

    try:
        return RunConfig(
            dataset=_build(DatasetSpec, "dataset", doc.get("dataset", {})),
            train=train,
            tta=tta,
            sweep=_build(SweepConfig, "sweep", doc.get("sweep", {})),
            io=_build(IoConfig, "io", doc.get("io", {})),
            **model,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, preset=None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise StorageIOError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(doc, preset)
