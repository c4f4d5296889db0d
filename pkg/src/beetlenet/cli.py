"""Command-line entry point.

Every subcommand reads a TOML run configuration, writes into a fixed
subdirectory of the run's output directory and drops a ``config.json``
echo of the resolved configuration next to its outputs.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure (divergence, solver non-convergence).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
from dataclasses import replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import _jit
from .augment import AugmentationStrategy, balance_dataset, derive_seed, write_augment_manifest
from .baselines.search import featurize_all, fit_predict, grid_search, params_to_str, write_grid_csv
from .baselines.svm import SVMConvergenceError
from .config import ConfigError, load_config
from .data import (
    FLIGHTS,
    NUM_CLASSES,
    REFERENCE_CLASS_COUNTS,
    AttackStage,
    DataError,
    NormalizationStats,
    apply_manifest,
    class_counts,
    compute_normalization,
    extract_patch,
    format_annotations,
    load_raster,
    parse_annotations,
    read_patch_archive,
    read_split_manifest,
    save_png,
    stratified_split,
    write_patch_archive,
    write_split_manifest,
)
from .evaluation import (
    average_accuracy,
    confusion_matrix,
    group_by_stage,
    make_synthetic_fixture,
    mean_color_scatter,
    render_outputs,
    rgb_histograms,
    tsne_embed,
)
from .network import CheckpointError, build_network, export_checkpoint, import_checkpoint, load_checkpoint, prepare_batch
from .training import DivergenceError, evaluate_arrays, train_flight_model

log = logging.getLogger("beetlenet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _threads():
    raw = os.environ.get("BEETLENET_THREADS", "")
    try:
        return max(1, int(raw)) if raw else None
    except ValueError:
        raise ConfigError(f"BEETLENET_THREADS must be an integer, got {raw!r}")


def _echo(directory, cfg):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_split(cfg, flight):
    patches = read_patch_archive(cfg.out_dir / "patches" / flight)
    assignment, seed = read_split_manifest(cfg.out_dir / "splits", flight)
    return apply_manifest(patches, assignment, seed)


def _training_set(cfg, flight, split):
    aug_dir = cfg.out_dir / "augmented" / flight
    return read_patch_archive(aug_dir) if (aug_dir / "index.csv").exists() else split.train


# ------------------------------------------------------------ commands ----

def cmd_prepare(cfg):
    """Extract crown patches per flight and write stratified split manifests."""
    if cfg.annotations is None or not cfg.annotations.exists():
        raise DataError(f"annotation file not found: {cfg.annotations}")
    anns = parse_annotations(cfg.annotations.read_text())
    for flight, raster_path in cfg.rasters.items():
        if raster_path is None or not raster_path.exists():
            raise DataError(f"raster for flight {flight} not found: {raster_path}")
    split_dir = cfg.out_dir / "splits"
    out = {}
    for flight, raster_path in cfg.rasters.items():
        raster = load_raster(raster_path)
        mine = [a for a in anns if a.flight == flight]
        if not mine:
            raise DataError(f"no annotations for flight {flight}")
        patches = [extract_patch(raster, a, cfg.patch_side) for a in mine]
        spec = cfg.splits[flight]
        split = stratified_split(patches, spec.val, spec.test, cfg.seed, spec.pinned_train())
        patch_dir = cfg.out_dir / "patches" / flight
        write_patch_archive(patches, patch_dir)
        _echo(patch_dir, cfg)
        write_split_manifest(split, split_dir, flight)
        out[flight] = split.counts()
        print(f"prepare {flight}: {len(patches)} patches, train/val/test "
              f"{len(split.train)}/{len(split.val)}/{len(split.test)}")
    _echo(split_dir, cfg)
    return out


def cmd_augment(cfg):
    """Balance every flight's training split with the configured strategy."""
    base = cfg.out_dir / "augmented"
    totals = {}
    for i, flight in enumerate(cfg.flights):
        split = _load_split(cfg, flight)
        if cfg.strategy is AugmentationStrategy.NONE:
            print(f"augment {flight}: strategy None, training set left unbalanced")
            train, rows = list(split.train), []
        else:
            train, rows = balance_dataset(split.train, cfg.strategy, cfg.augment, seed=derive_seed(cfg.seed, i))
        write_patch_archive(train, base / flight)
        _echo(base / flight, cfg)
        write_augment_manifest(rows, base / f"{flight}_manifest.csv")
        totals[flight] = {"counts": class_counts(train), "total": len(train), "synthetic": len(rows)}
        print(f"augment {flight}: {len(split.train)} -> {len(train)} ({cfg.strategy.value})")
    _write_json(base / "totals.json", totals)
    _echo(base, cfg)
    return totals


def cmd_train(cfg):
    """Train one network per flight and keep its best-validation checkpoint."""
    model_dir = cfg.out_dir / "models"
    model_dir.mkdir(parents=True, exist_ok=True)
    _echo(model_dir, cfg)
    reports, failures = {}, []
    for flight in cfg.flights:
        split = _load_split(cfg, flight)
        train = _training_set(cfg, flight, split)
        stats = compute_normalization(train, cfg.normalization_eps)
        init = None
        if cfg.init_checkpoint is not None:
            if not cfg.init_checkpoint.exists():
                raise DataError(f"initial checkpoint not found: {cfg.init_checkpoint}")
            init = build_network(cfg.network, seed=cfg.seed)
            rep = import_checkpoint(cfg.init_checkpoint, init)
            _write_json(model_dir / f"{flight}_init.json", rep.to_dict())
            print(f"train {flight}: initialized {len(rep.matched)} tensors from {cfg.init_checkpoint.name}")
        try:
            store, report = train_flight_model(replace(split, train=train), cfg.network, cfg.train, stats, init)
        except DivergenceError as exc:
            failures.append(flight)
            if exc.report is not None:
                exc.report.write(model_dir / f"{flight}_report.json")
            print(f"train {flight}: diverged ({exc})", file=sys.stderr)
            continue
        export_checkpoint(store, model_dir / f"{flight}.ckpt")
        report.write(model_dir / f"{flight}_report.json")
        _write_json(model_dir / f"{flight}_norm.json", stats.to_dict())
        reports[flight] = report.to_dict()
        best = report.val_accuracy[report.best_epoch - 1] if report.best_epoch else float("nan")
        print(f"train {flight}: best epoch {report.best_epoch}/{report.stopped_epoch}, "
              f"val accuracy {best:.4f}, {report.wall_time:.1f}s")
    if failures:
        raise DivergenceError(f"training diverged for {failures}")
    return reports


def cmd_eval(cfg):
    """Test-set confusion matrices per flight plus macro and micro averages."""
    model_dir = cfg.out_dir / "models"
    matrices = {}
    for flight in cfg.flights:
        ckpt = model_dir / f"{flight}.ckpt"
        norm = model_dir / f"{flight}_norm.json"
        if not ckpt.exists():
            raise DataError(f"checkpoint for flight {flight} not found: {ckpt}")
        if not norm.exists():
            raise DataError(f"normalization stats for flight {flight} not found: {norm}")
        store = load_checkpoint(ckpt)
        stats = NormalizationStats.from_dict(json.loads(norm.read_text()))
        split = _load_split(cfg, flight)
        if not split.test:
            raise DataError(f"flight {flight} has an empty test split")
        X = prepare_batch(split.test, stats, cfg.network.input_side).astype(np.float32)
        y = np.array([int(p.stage) for p in split.test], dtype=np.int64)
        _, _, pred = evaluate_arrays(store, X, y, cfg.network, cfg.train)
        matrices[flight] = confusion_matrix(pred, y)
        pred_path = cfg.out_dir / "eval" / "predictions" / f"{flight}.csv"
        pred_path.parent.mkdir(parents=True, exist_ok=True)
        with open(pred_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tree_id", "truth", "prediction"])
            for p, q in zip(split.test, pred):
                w.writerow([p.tree_id, p.stage.label, AttackStage(int(q)).label])
    report = average_accuracy(matrices)
    render_outputs(cfg.out_dir / "eval", report=report, matrices=matrices)
    _echo(cfg.out_dir / "eval", cfg)
    for flight, acc in report.per_flight.items():
        print(f"eval {flight}: accuracy {100 * acc:.2f}%")
    print(f"eval: macro {100 * report.macro:.2f}%, micro {100 * report.micro:.2f}%")
    return {"per_flight": report.per_flight, "macro": report.macro, "micro": report.micro}


def cmd_baselines(cfg):
    """Grid-search KNN, SVM and RF on raw-pixel features per flight."""
    base = cfg.out_dir / "baselines"
    summary = []
    for flight in cfg.flights:
        split = _load_split(cfg, flight)
        Xtr, ytr = featurize_all(split.train, cfg.feature_side)
        Xva, yva = featurize_all(split.val, cfg.feature_side)
        Xte, yte = featurize_all(split.test, cfg.feature_side)
        for kind in cfg.classifiers:
            result = grid_search(kind, cfg.baseline_grids[kind], (Xtr, ytr), (Xva, yva), seed=cfg.seed)
            pred = fit_predict(kind, result.best_params, Xtr, ytr, Xte, seed=cfg.seed)
            test_acc = float(np.mean(pred == yte)) if len(yte) else float("nan")
            write_grid_csv(result, test_acc, base / flight / f"{kind}.csv")
            summary.append((flight, kind, result.best_params, result.best_val_accuracy, test_acc))
            print(f"baselines {flight} {kind}: best {params_to_str(result.best_params)} "
                  f"val {result.best_val_accuracy:.4f} test {test_acc:.4f}")
        _echo(base / flight, cfg)
    with open(base / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["flight", "classifier", "params", "val_accuracy", "test_accuracy"])
        for flight, kind, params, va, te in summary:
            w.writerow([flight, kind, params_to_str(params), f"{va:.6f}", f"{te:.6f}"])
    _echo(base, cfg)
    return summary


def cmd_visualize(cfg):
    """Colour scatter and histograms over all patches, plus one t-SNE map
    of the pooled training set per balancing strategy."""
    vis = cfg.visualize
    splits = {f: _load_split(cfg, f) for f in cfg.flights}
    everything = [p for s in splits.values() for p in s.train + s.val + s.test]
    groups = group_by_stage(everything)
    missing = [s.label for s in AttackStage if s not in groups]
    if missing:
        raise DataError(f"cannot visualize: no patches for {missing}")
    embeddings = {}
    for strategy in vis.strategies:
        s = AugmentationStrategy.parse(strategy)
        pooled = []
        for i, (flight, split) in enumerate(splits.items()):
            if s is AugmentationStrategy.NONE:
                pooled.extend(split.train)
            else:
                pooled.extend(balance_dataset(split.train, s, cfg.augment, seed=derive_seed(cfg.seed, i))[0])
        X, y = featurize_all(pooled, vis.feature_side)
        if len(X) <= 3 * vis.perplexity:
            raise ConfigError(f"t-SNE with perplexity {vis.perplexity} needs more than "
                              f"{3 * vis.perplexity:g} samples; strategy {s.value} has {len(X)}")
        embeddings[s.value] = tsne_embed(X, vis.perplexity, vis.iterations, seed=cfg.seed, labels=y)
        print(f"visualize {s.value}: t-SNE of {len(X)} samples, KL {embeddings[s.value].kl_divergence:.4f}")
    render_outputs(cfg.out_dir / "visualize", histograms=rgb_histograms(groups),
                   embeddings=embeddings, scatter=mean_color_scatter(everything))
    _echo(cfg.out_dir / "visualize", cfg)
    return {name: e.kl_divergence for name, e in embeddings.items()}


def _versions():
    out = {"python": platform.python_version(), "backend": _jit.backend_name()}
    for pkg in ("beetlenet", "numpy", "numba", "scikit-learn", "Pillow"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def cmd_reproduce(cfg):
    """Run prepare, augment, train, eval and visualize, then write summary.json."""
    cmd_prepare(cfg)
    cmd_augment(cfg)
    reports = cmd_train(cfg)
    metrics = cmd_eval(cfg)
    kl = cmd_visualize(cfg)
    summary = {
        "config": cfg.to_dict(),
        "versions": _versions(),
        "accuracy": metrics,
        "best_epochs": {f: r["best_epoch"] for f, r in reports.items()},
        "tsne_kl": kl,
    }
    _write_json(cfg.out_dir / "summary.json", summary)
    _echo(cfg.out_dir, cfg)
    print(f"reproduce: summary written to {cfg.out_dir / 'summary.json'}")
    return summary


def _synth_counts(flight, majority, balanced):
    """Per-class counts with ``majority`` Green crowns; unless balanced, the
    minority classes follow the flight's real class ratios."""
    if balanced:
        return [majority] * NUM_CLASSES
    ref = REFERENCE_CLASS_COUNTS[flight]
    return [max(1, int(round(majority * r / ref[0]))) for r in ref]


def cmd_synth(args):
    """Write a synthetic fixture dataset and a ready-to-run config."""
    out = Path(args.out).resolve()
    out.mkdir(parents=True, exist_ok=True)
    anns = []
    flights = args.flights or ["Jun60"]
    splits = {}
    for i, flight in enumerate(flights):
        counts = _synth_counts(flight, args.per_class, args.balanced)
        total = sum(counts)
        splits[flight] = (max(NUM_CLASSES, int(round(0.1 * total))), max(NUM_CLASSES, int(round(0.2 * total))))
        fx = make_synthetic_fixture(counts, side=args.side, overlap=args.overlap,
                                    seed=derive_seed(args.seed, i), flight=flight)
        save_png(out / f"{flight}.png", fx.raster)
        anns.extend(fx.annotations)
    (out / "annotations.csv").write_text(format_annotations(anns))
    lines = [f"seed = {args.seed}", "", "[paths]", 'out = "run"', 'annotations = "annotations.csv"', "",
             "[paths.rasters]"]
    lines += [f'{f} = "{f}.png"' for f in flights]
    lines += ["", "[data]", f"patch_side = {args.side}", ""]
    for f in flights:
        lines += [f"[splits.{f}]", f"val = {splits[f][0]}", f"test = {splits[f][1]}", ""]
    lines += ["[augment]", 'strategy = "AffineWarp"', "",
              "[network]", 'backbone_scale = "tiny"', "fpn_channels = 32", f"input_side = {args.input_side}", "",
              "[train]", f"epochs = {args.epochs}", "",
              "[visualize]", f"perplexity = {args.perplexity:g}", f"iterations = {args.tsne_iterations}", ""]
    (out / "config.toml").write_text("\n".join(lines))
    print(f"synth: {len(anns)} crowns over {len(flights)} flight(s), config at {out / 'config.toml'}")
    return out / "config.toml"


COMMANDS = {
    "prepare": cmd_prepare,
    "augment": cmd_augment,
    "train": cmd_train,
    "eval": cmd_eval,
    "baselines": cmd_baselines,
    "visualize": cmd_visualize,
    "reproduce": cmd_reproduce,
}


def build_parser():
    parser = _Parser(prog="beetlenet", description="Bark-beetle attack-stage classification pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=" ".join(fn.__doc__.split()))
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--out", default=None, help="overrides paths.out")
    p = sub.add_parser("synth", help="Write a synthetic crown dataset and a ready-to-run config.")
    p.add_argument("--out", required=True, help="workspace directory to create")
    p.add_argument("--seed", type=int, required=True, help="rendering seed, also written into the config")
    p.add_argument("--per-class", type=int, default=50, help="Green (majority) crowns per flight")
    p.add_argument("--balanced", action="store_true", help="equal counts for every class")
    p.add_argument("--overlap", type=float, default=0.1, help="chance a neighbouring crown intrudes")
    p.add_argument("--side", type=int, default=64, help="patch side in pixels")
    p.add_argument("--input-side", type=int, default=64, help="network input side")
    p.add_argument("--flights", nargs="*", default=None, choices=sorted(FLIGHTS))
    p.add_argument("--epochs", type=int, default=10, help="training epochs written to the config")
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--tsne-iterations", type=int, default=1000)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        _jit.set_threads(_threads())
        if args.command == "synth":
            cmd_synth(args)
            return EXIT_OK
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        COMMANDS[args.command](cfg)
        return EXIT_OK
    except ConfigError as exc:
        print(f"beetlenet: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, SVMConvergenceError, FloatingPointError) as exc:
        print(f"beetlenet: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, CheckpointError, OSError, ValueError) as exc:
        print(f"beetlenet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
