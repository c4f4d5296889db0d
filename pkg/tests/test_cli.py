import csv
import json
import shutil
import subprocess
import sys

import pytest

from beetlenet.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main

SMALL_GRIDS = """
[baselines]
feature_side = 8

[baselines.grids.knn]
k = [1, 3]

[baselines.grids.svm]
C = [1.0]
kernel = ["linear"]

[baselines.grids.rf]
n_trees = [5]
max_depth = ["none"]
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    code = main(["synth", "--out", str(root), "--seed", "4", "--per-class", "12", "--side", "32",
                 "--input-side", "32", "--epochs", "2", "--perplexity", "5", "--tsne-iterations", "60"])
    assert code == EXIT_OK
    cfg = root / "config.toml"
    cfg.write_text(cfg.read_text().replace("fpn_channels = 32", "fpn_channels = 8") + SMALL_GRIDS)
    return root


@pytest.fixture
def config(workspace, tmp_path):
    """A private copy of the synthetic workspace per test."""
    dst = tmp_path / "ws"
    shutil.copytree(workspace, dst)
    return dst / "config.toml"


def test_synth_writes_dataset(workspace):
    assert (workspace / "Jun60.png").exists()
    rows = list(csv.DictReader(open(workspace / "annotations.csv")))
    stages = [r["stage"] for r in rows]
    # imbalanced like the real flight: 12 Green, fewer of each other class
    assert stages.count("Green") == 12 and 0 < stages.count("Red") < 12


def test_prepare_is_idempotent(config, capsys):
    assert main(["prepare", "--config", str(config)]) == EXIT_OK
    run = config.parent / "run"
    first = (run / "splits" / "Jun60_split.csv").read_bytes()
    assert main(["prepare", "--config", str(config)]) == EXIT_OK
    assert (run / "splits" / "Jun60_split.csv").read_bytes() == first
    echo = json.loads((run / "splits" / "config.json").read_text())
    assert echo["seed"] == 4
    assert "prepare Jun60" in capsys.readouterr().out


def test_seed_override_changes_split(config):
    assert main(["prepare", "--config", str(config), "--out", str(config.parent / "a")]) == EXIT_OK
    assert main(["prepare", "--config", str(config), "--seed", "5", "--out", str(config.parent / "b")]) == EXIT_OK
    a = (config.parent / "a" / "splits" / "Jun60_split.csv").read_text()
    b = (config.parent / "b" / "splits" / "Jun60_split.csv").read_text()
    assert a != b


def test_missing_raster_is_named(config, capsys):
    (config.parent / "Jun60.png").unlink()
    assert main(["prepare", "--config", str(config)]) == EXIT_DATA
    assert "Jun60" in capsys.readouterr().err


def test_config_errors_exit_1(config, capsys):
    no_seed = config.parent / "noseed.toml"
    no_seed.write_text("\n".join(l for l in config.read_text().splitlines() if not l.startswith("seed")))
    assert main(["prepare", "--config", str(no_seed)]) == EXIT_CONFIG
    assert "seed" in capsys.readouterr().err
    config.write_text(config.read_text() + "\n[oops]\n")
    assert main(["prepare", "--config", str(config)]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as info:     # argparse usage errors share the code
        main(["prepare"])
    assert info.value.code == EXIT_CONFIG


def test_eval_without_checkpoint(config, capsys):
    assert main(["prepare", "--config", str(config)]) == EXIT_OK
    assert main(["eval", "--config", str(config)]) == EXIT_DATA
    assert "checkpoint" in capsys.readouterr().err


def test_augment_none_notice(config, capsys):
    config.write_text(config.read_text().replace('strategy = "AffineWarp"', 'strategy = "None"'))
    assert main(["prepare", "--config", str(config)]) == EXIT_OK
    assert main(["augment", "--config", str(config)]) == EXIT_OK
    assert "strategy None" in capsys.readouterr().out


def test_baselines_single_point_grids(config):
    assert main(["prepare", "--config", str(config)]) == EXIT_OK
    assert main(["baselines", "--config", str(config)]) == EXIT_OK
    base = config.parent / "run" / "baselines"
    assert len(list(csv.DictReader(open(base / "Jun60" / "knn.csv")))) == 2
    assert len(list(csv.DictReader(open(base / "Jun60" / "svm.csv")))) == 1
    summary = list(csv.DictReader(open(base / "summary.csv")))
    assert [r["classifier"] for r in summary] == ["knn", "svm", "rf"]
    assert (base / "config.json").exists()


def test_reproduce_end_to_end(config):
    assert main(["reproduce", "--config", str(config)]) == EXIT_OK
    run = config.parent / "run"
    summary = json.loads((run / "summary.json").read_text())
    assert set(summary["accuracy"]) >= {"macro", "micro"}
    for rel in ("models/Jun60.ckpt", "models/Jun60_report.json", "eval/metrics/accuracy.csv",
                "eval/predictions/Jun60.csv", "augmented/Jun60_manifest.csv", "visualize/tsne/AffineWarp.csv"):
        assert (run / rel).exists(), rel
    for d in ("models", "eval", "augmented", "visualize"):
        assert (run / d / "config.json").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "beetlenet", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "reproduce" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "beetlenet", "prepare", "--config", str(tmp_path / "none.toml")],
                          capture_output=True, text=True)
    assert proc.returncode == 1 and "not found" in proc.stderr
