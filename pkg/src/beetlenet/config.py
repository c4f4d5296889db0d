"""TOML run configuration.

Relative paths are resolved against the directory holding the config file.
Unknown keys are rejected so that typos fail loudly instead of silently
falling back to defaults.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import tomli

from .augment import AugmentationParams, AugmentationStrategy
from .baselines.search import DEFAULT_GRIDS, FEATURE_SIDE
from .data import DEFAULT_PATCH_SIDE, PINNED_GREEN_TRAIN, REFERENCE_SPLITS, AttackStage
from .network import NetworkConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    val: int
    test: int
    pinned_green: Optional[int] = None

    def pinned_train(self):
        return None if self.pinned_green is None else {AttackStage.GREEN: self.pinned_green}


@dataclass(frozen=True)
class VisualizeConfig:
    strategies: tuple = ("None", "AffineWarp", "ColorJitter")
    perplexity: float = 30.0
    iterations: int = 1000
    feature_side: int = FEATURE_SIDE


@dataclass
class RunConfig:
    seed: int
    out_dir: Path
    rasters: dict
    annotations: Optional[Path] = None
    init_checkpoint: Optional[Path] = None
    patch_side: int = DEFAULT_PATCH_SIDE
    normalization_eps: Optional[float] = None
    splits: dict = field(default_factory=dict)
    strategy: AugmentationStrategy = AugmentationStrategy.AFFINE_WARP
    augment: AugmentationParams = field(default_factory=AugmentationParams)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    classifiers: tuple = ("knn", "svm", "rf")
    baseline_grids: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_GRIDS.items()})
    feature_side: int = FEATURE_SIDE
    visualize: VisualizeConfig = field(default_factory=VisualizeConfig)

    @property
    def flights(self):
        return list(self.rasters)

    def to_dict(self):
        """JSON-friendly echo of the fully resolved configuration."""
        def plain(v):
            if isinstance(v, Path):
                return str(v)
            if isinstance(v, AugmentationStrategy):
                return v.value
            if dataclasses.is_dataclass(v):
                return {f.name: plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
            if isinstance(v, dict):
                return {str(k): plain(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [plain(x) for x in v]
            return v
        out = {f.name: plain(getattr(self, f.name)) for f in dataclasses.fields(self)}
        out["network"] = self.network.to_dict()
        return out


def _take(table, allowed, where):
    unknown = set(table) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    return table


def _dataclass_from(cls, table, where, **extra):
    names = {f.name for f in dataclasses.fields(cls)}
    _take(table, names, where)
    kwargs = dict(table)
    for k, v in kwargs.items():
        if isinstance(v, list):
            kwargs[k] = tuple(v)
    kwargs.update(extra)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}] {exc}") from exc


def _path(base, value):
    if value is None or value == "":
        return None
    p = Path(value).expanduser()
    return p if p.is_absolute() else (base / p).resolve()


def load_config(path, seed=None, out=None):
    """Parse a TOML run configuration.

    ``seed`` and ``out`` override the file. A seed must come from one of the
    two; there is no default.
    """
    path = Path(path)
    try:
        raw = tomli.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return config_from_dict(raw, path.resolve().parent, seed=seed, out=out)


def config_from_dict(raw, base_dir, seed=None, out=None):
    base = Path(base_dir)
    _take(raw, {"seed", "paths", "data", "splits", "augment", "network", "train", "baselines", "visualize"},
          "top level")
    if seed is None:
        seed = raw.get("seed")
    if seed is None:
        raise ConfigError("a seed is required: set `seed` in the config or pass --seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

    paths = _take(raw.get("paths", {}), {"out", "annotations", "init_checkpoint", "rasters"}, "[paths]")
    out_dir = Path(out).resolve() if out is not None else _path(base, paths.get("out"))
    if out_dir is None:
        raise ConfigError("no output directory: set paths.out or pass --out")
    rasters = {}
    for flight, p in paths.get("rasters", {}).items():
        rasters[flight] = _path(base, p)

    data = _take(raw.get("data", {}), {"patch_side", "normalization_eps"}, "[data]")
    patch_side = int(data.get("patch_side", DEFAULT_PATCH_SIDE))
    if patch_side < 8:
        raise ConfigError(f"patch_side must be >= 8, got {patch_side}")

    splits = {}
    split_tables = raw.get("splits", {})
    unknown = set(split_tables) - set(rasters)
    if unknown:
        raise ConfigError(f"[splits] names flights without a raster: {sorted(unknown)}")
    for flight in rasters:
        t = _take(split_tables.get(flight, {}), {"val", "test", "pinned_green"}, f"[splits.{flight}]")
        if flight in REFERENCE_SPLITS:
            _, dv, dt = REFERENCE_SPLITS[flight]
        elif "val" not in t or "test" not in t:
            raise ConfigError(f"[splits.{flight}] needs val and test counts")
        else:
            dv = dt = 0
        pinned = t.get("pinned_green")
        if pinned is None and flight in PINNED_GREEN_TRAIN and "val" not in t and "test" not in t:
            pinned = PINNED_GREEN_TRAIN[flight]
        splits[flight] = SplitSpec(int(t.get("val", dv)), int(t.get("test", dt)), pinned)

    aug = dict(raw.get("augment", {}))
    try:
        strategy = AugmentationStrategy.parse(aug.pop("strategy", "AffineWarp"))
    except ValueError as exc:
        raise ConfigError(f"[augment] {exc}") from exc
    augment = _dataclass_from(AugmentationParams, aug, "augment")

    network = _dataclass_from(NetworkConfig, raw.get("network", {}), "network")
    train = _dataclass_from(TrainConfig, raw.get("train", {}), "train", seed=seed)

    bl = _take(raw.get("baselines", {}), {"classifiers", "feature_side", "grids"}, "[baselines]")
    classifiers = tuple(bl.get("classifiers", ("knn", "svm", "rf")))
    bad = set(classifiers) - set(DEFAULT_GRIDS)
    if bad:
        raise ConfigError(f"[baselines] unknown classifiers {sorted(bad)}")
    grids = {k: dict(v) for k, v in DEFAULT_GRIDS.items()}
    for kind, g in bl.get("grids", {}).items():
        if kind not in DEFAULT_GRIDS:
            raise ConfigError(f"[baselines.grids] unknown classifier {kind!r}")
        _take(g, DEFAULT_GRIDS[kind], f"[baselines.grids.{kind}]")
        for k, v in g.items():
            if not isinstance(v, list) or not v:
                raise ConfigError(f"[baselines.grids.{kind}] {k} must be a non-empty list")
            # TOML has no null; "none" stands for an unlimited tree depth
            grids[kind][k] = [None if x == "none" else x for x in v]

    vis = _dataclass_from(VisualizeConfig, raw.get("visualize", {}), "visualize")
    for s in vis.strategies:
        try:
            AugmentationStrategy.parse(s)
        except ValueError as exc:
            raise ConfigError(f"[visualize] {exc}") from exc

    eps = data.get("normalization_eps")
    return RunConfig(
        seed=seed, out_dir=out_dir, rasters=rasters,
        annotations=_path(base, paths.get("annotations")),
        init_checkpoint=_path(base, paths.get("init_checkpoint")),
        patch_side=patch_side, normalization_eps=None if eps is None else float(eps),
        splits=splits, strategy=strategy, augment=augment, network=network, train=train,
        classifiers=classifiers, baseline_grids=grids, feature_side=int(bl.get("feature_side", FEATURE_SIDE)),
        visualize=vis,
    )

