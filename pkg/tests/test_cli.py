import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from bsce.cli import main
from bsce.config import parse_config
from bsce.data import load_dataset
from bsce.errors import ConfigError
from bsce.trainer import init_model, load_checkpoint

SMALL = {
    "dataset": {"num_classes": 3, "head_count": 24, "imbalance_ratio": 3, "noise_rate": 0.2, "image_side": 8,
                "val_per_class": 4, "test_per_class": 5, "prototype_grid": 3, "seed": 1},
    "train": {"epochs": 3, "input_side": 6, "loss": {"kind": "bsce"}},
    "tta": {"resize_sides": [7, 8, 10], "crop_side": 6},
    "sweep": {"kinds": ["ce", "bsce"], "seeds": [0, 1]},
}


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def with_io(doc, **io):
    return {**doc, "io": io}


@pytest.fixture
def synth(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--config", write_config(tmp_path, SMALL), "--out", str(out)]) == 0
    return out / "dataset.bin"


@pytest.fixture
def trained(tmp_path, synth):
    out = tmp_path / "run"
    cfg = write_config(tmp_path, with_io(SMALL, dataset=str(synth)), "train.json")
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    return out


def test_synth_writes_dataset_and_tables(tmp_path, capsys):
    out_dir = tmp_path / "fresh"
    assert main(["synth", "--config", write_config(tmp_path, SMALL), "--out", str(out_dir)]) == 0
    ds = load_dataset(out_dir / "dataset.bin")
    assert ds.num_classes == 3
    out = capsys.readouterr().out
    assert "n(k)" in out and "w(k)" in out and f"N = {len(ds.train)}" in out


def test_synth_rerun_is_byte_identical(tmp_path, synth):
    out = tmp_path / "again"
    assert main(["synth", "--config", write_config(tmp_path, SMALL), "--out", str(out)]) == 0
    assert (out / "dataset.bin").read_bytes() == synth.read_bytes()


def test_unknown_key_is_config_error(tmp_path, capsys):
    doc = {"dataset": {"noise_rte": 0.3}}
    assert main(["synth", "--config", write_config(tmp_path, doc), "--out", str(tmp_path)]) == 1
    assert "noise_rte" in capsys.readouterr().err


@pytest.mark.parametrize(
    "doc",
    [
        {"datasets": {}},
        {"train": {"loss": {"kind": "focal"}}},
        {"train": {"lr_factor": 2.0}},
        {"tta": {"resize_sides": [10], "crop_side": 20}},
        {"dataset": {"head_count": 5, "imbalance_ratio": 50}},
        {"train": {"input_side": 40}},
        {"sweep": {"split": "holdout"}},
        {"train": {"loss": {"kind": "ce", "gamma": 2}}},
        [],
    ],
)
def test_invalid_configs(doc):
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_defaults_and_preset():
    cfg = parse_config({})
    assert cfg.train.initial_lr == 0.01 and cfg.train.lr_factor == 0.1
    assert cfg.train.loss.alpha == 0.4 and cfg.train.loss.beta == 0.7
    assert cfg.tta.resize_sides == (26, 28, 30, 32, 36)
    full = parse_config({}, preset="paper-scales")
    assert full.tta.resize_sides == (384, 412, 424, 436, 464) and full.tta.crop_side == 331


def test_bad_json_and_missing_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["synth", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["synth", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2


def test_bad_log_level(tmp_path, monkeypatch):
    monkeypatch.setenv("BSCE_LOG_LEVEL", "chatty")
    assert main(["synth", "--config", write_config(tmp_path, SMALL), "--out", str(tmp_path)]) == 1


def test_train_outputs(trained):
    rows = list(csv.DictReader((trained / "history.csv").open()))
    assert [int(r["epoch"]) for r in rows] == [1, 2, 3]
    state, echo = load_checkpoint(trained / "checkpoint.bin")
    assert len(state.history) == 3
    assert echo["initial_lr"] == 0.01 and echo["loss"]["kind"] == "bsce"


def test_train_twice_identical(tmp_path, synth, trained):
    out = tmp_path / "run2"
    cfg = write_config(tmp_path, with_io(SMALL, dataset=str(synth)), "train.json")
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    for name in ("checkpoint.bin", "history.csv"):
        assert (out / name).read_bytes() == (trained / name).read_bytes()


def test_train_zero_epochs_is_init(tmp_path, synth):
    doc = with_io({**SMALL, "train": {**SMALL["train"], "epochs": 0, "seed": 4}}, dataset=str(synth))
    out = tmp_path / "zero"
    assert main(["train", "--config", write_config(tmp_path, doc), "--out", str(out)]) == 0
    state, _ = load_checkpoint(out / "checkpoint.bin")
    assert state.params.equals(init_model(6, 0, 3, seed=4))
    assert (out / "history.csv").read_text().count("\n") == 1


def test_train_divergence_exit_code(tmp_path, synth, capsys):
    doc = with_io({**SMALL, "train": {**SMALL["train"], "initial_lr": 1e200, "hidden_dim": 4,
                                      "loss": {"kind": "ce"}}}, dataset=str(synth))
    assert main(["train", "--config", write_config(tmp_path, doc), "--out", str(tmp_path / "d")]) == 3
    assert "epoch 1" in capsys.readouterr().err


def test_missing_inputs_exit_2(tmp_path):
    doc = with_io(SMALL, dataset=str(tmp_path / "missing.bin"))
    for cmd in ("train", "eval", "tta", "ensemble", "sweep"):
        assert main([cmd, "--config", write_config(tmp_path, doc), "--out", str(tmp_path)]) == 2


def test_eval_and_single_member_ensemble_agree(tmp_path, synth, trained, capsys):
    ckpt = str(trained / "checkpoint.bin")
    out_e, out_n = tmp_path / "e", tmp_path / "n"
    assert main(["eval", "--config", write_config(tmp_path, with_io(SMALL, dataset=str(synth), checkpoint=ckpt), "e.json"),
                 "--out", str(out_e)]) == 0
    assert main(["ensemble", "--config",
                 write_config(tmp_path, with_io(SMALL, dataset=str(synth), checkpoints=[ckpt]), "n.json"),
                 "--out", str(out_n)]) == 0
    assert (out_e / "report.csv").read_text() == (out_n / "report.csv").read_text()
    header = (out_e / "report.csv").read_text().splitlines()[0]
    assert header == "label,split,mean_top1_error,n,seed"


def test_eval_perfect_memorisation(tmp_path):
    doc = {
        "dataset": {"num_classes": 2, "head_count": 10, "imbalance_ratio": 1, "noise_rate": 0.0, "image_side": 6,
                    "pixel_noise": 0.0, "val_per_class": 2, "test_per_class": 2, "prototype_grid": 2, "seed": 0},
        "train": {"epochs": 20, "input_side": 6, "initial_lr": 0.5, "loss": {"kind": "ce"}},
        "sweep": {"split": "train"},
    }
    data = tmp_path / "d"
    assert main(["synth", "--config", write_config(tmp_path, doc), "--out", str(data)]) == 0
    doc["io"] = {"dataset": str(data / "dataset.bin")}
    run = tmp_path / "r"
    assert main(["train", "--config", write_config(tmp_path, doc), "--out", str(run)]) == 0
    doc["io"]["checkpoint"] = str(run / "checkpoint.bin")
    assert main(["eval", "--config", write_config(tmp_path, doc), "--out", str(run)]) == 0
    rows = list(csv.DictReader((run / "report.csv").open()))
    assert float(rows[0]["mean_top1_error"]) == 0.0


def test_tta_command(tmp_path, synth, trained, capsys):
    doc = with_io(SMALL, dataset=str(synth), checkpoint=str(trained / "checkpoint.bin"))
    out = tmp_path / "t"
    assert main(["tta", "--config", write_config(tmp_path, doc), "--out", str(out)]) == 0
    labels = [r["label"] for r in csv.DictReader((out / "report.csv").open())]
    assert labels == ["7", "8", "10", "tta"]
    assert "0.1354" in capsys.readouterr().out
    # the full-scale preset crops to 331, which this 6x6 model cannot take
    assert main(["tta", "--config", write_config(tmp_path, doc), "--out", str(out), "--preset", "paper-scales"]) == 1


def test_sweep_command(tmp_path, synth, capsys):
    doc = with_io(SMALL, dataset=str(synth))
    outs = []
    for name in ("s1", "s2"):
        out = tmp_path / name
        assert main(["sweep", "--config", write_config(tmp_path, doc), "--out", str(out)]) == 0
        outs.append((out / "report.csv").read_bytes())
    assert outs[0] == outs[1]
    text = capsys.readouterr().out
    assert "seed" in text and "bsce" in text and "mean" in text


def test_ensemble_needs_checkpoints(tmp_path, synth):
    doc = with_io(SMALL, dataset=str(synth))
    assert main(["ensemble", "--config", write_config(tmp_path, doc), "--out", str(tmp_path)]) == 1


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    res = subprocess.run([sys.executable, "-m", "bsce", "synth", "--config", cfg, "--out", str(tmp_path / "m")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert np.frombuffer((tmp_path / "m" / "dataset.bin").read_bytes()[:7], dtype="S7")[0] == b"BSCEDS1"
