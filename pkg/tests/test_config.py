from pathlib import Path

import pytest

from beetlenet.augment import AugmentationStrategy
from beetlenet.config import ConfigError, config_from_dict, load_config
from beetlenet.data import PINNED_GREEN_TRAIN

BASE = {"seed": 3, "paths": {"out": "run", "annotations": "a.csv", "rasters": {"Jun60": "j.png"}}}


def cfg(**overrides):
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in BASE.items()}
    raw.update(overrides)
    return config_from_dict(raw, Path("/data/cfg"))


def test_defaults_and_path_resolution():
    c = cfg()
    assert c.seed == 3 and c.out_dir == Path("/data/cfg/run")
    assert c.rasters == {"Jun60": Path("/data/cfg/j.png")} and c.flights == ["Jun60"]
    assert c.patch_side == 100 and c.strategy is AugmentationStrategy.AFFINE_WARP
    assert c.splits["Jun60"].val == 7 and c.splits["Jun60"].test == 16
    assert c.splits["Jun60"].pinned_green == PINNED_GREEN_TRAIN["Jun60"]
    assert c.train.seed == 3
    d = c.to_dict()
    assert d["strategy"] == "AffineWarp" and d["out_dir"] == "/data/cfg/run"


def test_seed_is_mandatory_and_overridable():
    raw = {k: v for k, v in BASE.items() if k != "seed"}
    with pytest.raises(ConfigError, match="seed"):
        config_from_dict(raw, Path("."))
    assert config_from_dict(raw, Path("."), seed=8).seed == 8
    assert config_from_dict(BASE, Path("."), seed=0).seed == 0
    with pytest.raises(ConfigError):
        config_from_dict(dict(BASE, seed=-1), Path("."))


@pytest.mark.parametrize("bad", [
    {"bogus": 1},
    {"train": {"learning_rat": 0.1}},
    {"train": {"epochs": 0}},
    {"network": {"subnet_depth": 2}},
    {"augment": {"strategy": "Mixup"}},
    {"splits": {"Nov10": {"val": 1, "test": 1}}},
    {"baselines": {"classifiers": ["mlp"]}},
    {"baselines": {"grids": {"knn": {"k": []}}}},
    {"visualize": {"strategies": ["Sharpen"]}},
    {"data": {"patch_side": 4}},
])
def test_rejects_invalid_tables(bad):
    with pytest.raises(ConfigError):
        cfg(**bad)


def test_custom_flight_needs_split_counts():
    paths = dict(BASE["paths"], rasters={"Site1": "s.png"})
    with pytest.raises(ConfigError, match="val and test"):
        cfg(paths=paths)
    c = cfg(paths=paths, splits={"Site1": {"val": 4, "test": 5}})
    assert c.splits["Site1"].val == 4 and c.splits["Site1"].pinned_green is None


def test_explicit_split_disables_pinning():
    c = cfg(splits={"Jun60": {"val": 10, "test": 20}})
    assert (c.splits["Jun60"].val, c.splits["Jun60"].test, c.splits["Jun60"].pinned_green) == (10, 20, None)


def test_grid_overrides():
    c = cfg(baselines={"classifiers": ["rf"], "grids": {"rf": {"n_trees": [5], "max_depth": ["none", 3]}}})
    assert c.classifiers == ("rf",)
    assert c.baseline_grids["rf"]["max_depth"] == [None, 3]
    assert c.baseline_grids["knn"]["k"] == [1, 3, 5, 7, 9]


def test_load_config_file(tmp_path):
    (tmp_path / "c.toml").write_text('seed = 1\n[paths]\nout = "o"\n[paths.rasters]\nJul90 = "x.png"\n'
                                     '[train]\nepochs = 3\n')
    c = load_config(tmp_path / "c.toml", out=tmp_path / "elsewhere")
    assert c.out_dir == tmp_path / "elsewhere" and c.train.epochs == 3
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.toml")
    (tmp_path / "bad.toml").write_text("seed = = 1")
    with pytest.raises(ConfigError, match="invalid TOML"):
        load_config(tmp_path / "bad.toml")
