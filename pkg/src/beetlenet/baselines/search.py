"""Raw-pixel features and exhaustive grid search for the classical
baselines."""
import csv
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..imaging import resize_bilinear
from .forest import rf_fit, rf_predict
from .knn import knn_fit, knn_predict
from .svm import Kernel, svm_fit, svm_predict

FEATURE_SIDE = 32

DEFAULT_GRIDS = {
    "knn": {"k": [1, 3, 5, 7, 9]},
    "svm": {"C": [0.1, 1.0, 10.0, 100.0],
            "kernel": ["linear", "rbf:0.001", "rbf:0.01", "rbf:0.1"]},
    "rf": {"n_trees": [50, 100, 200], "max_depth": [8, 16, None], "features_per_split": ["sqrt"]},
}


def featurize(patch, side=FEATURE_SIDE):
    """Bilinear resize to side x side, channel-major flatten, scale to [0, 1]."""
    if side < 2:
        raise ValueError(f"feature side must be >= 2, got {side}")
    px = patch.pixels if hasattr(patch, "pixels") else np.asarray(patch)
    small = resize_bilinear(px, side)
    return small.transpose(2, 0, 1).ravel() / 255.0


def featurize_all(patches, side=FEATURE_SIDE):
    if not patches:
        return np.zeros((0, 3 * side * side)), np.zeros(0, dtype=np.int64)
    X = np.stack([featurize(p, side) for p in patches])
    y = np.array([int(p.stage) for p in patches], dtype=np.int64)
    return X, y


def parse_kernel(spec):
    if isinstance(spec, Kernel):
        return spec
    if spec == "linear":
        return Kernel("linear")
    if isinstance(spec, str) and spec.startswith("rbf:"):
        return Kernel("rbf", float(spec.split(":", 1)[1]))
    raise ValueError(f"unknown kernel spec {spec!r}")


def fit_predict(kind, params, Xtr, ytr, Xq, seed=0):
    if kind == "knn":
        return knn_predict(knn_fit(Xtr, ytr), Xq, int(params["k"]))
    if kind == "svm":
        return svm_predict(svm_fit(Xtr, ytr, float(params["C"]), parse_kernel(params["kernel"])), Xq)
    if kind == "rf":
        model = rf_fit(Xtr, ytr, int(params["n_trees"]), params.get("max_depth"),
                       params.get("features_per_split", "sqrt"), seed=seed)
        return rf_predict(model, Xq)
    raise ValueError(f"unknown classifier {kind!r}")


@dataclass
class GridResult:
    kind: str
    best_params: dict
    best_val_accuracy: float
    table: list = field(default_factory=list)   # (params, val_accuracy)


def expand_grid(grid):
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid must be non-empty in every dimension")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def grid_search(kind, grid, train, val, seed=0):
    """Evaluate every grid point on the validation set; ties keep the
    earliest grid point. ``train`` and ``val`` are (X, y) pairs."""
    Xtr, ytr = train
    Xva, yva = val
    table = []
    best = None
    for params in expand_grid(grid):
        if kind == "knn" and int(params["k"]) > len(ytr):
            acc = float("nan")
        else:
            acc = float(np.mean(fit_predict(kind, params, Xtr, ytr, Xva, seed) == yva)) if len(yva) else float("nan")
        table.append((params, acc))
        if not np.isnan(acc) and (best is None or acc > best[1]):
            best = (params, acc)
    if best is None:
        best = (table[0][0], float("nan"))
    return GridResult(kind, best[0], best[1], table)


def params_to_str(params):
    return json.dumps(params, sort_keys=True, separators=(",", ":"))


def write_grid_csv(result, test_accuracy, path):
    """Columns classifier,params,val_accuracy,test_accuracy; the test column
    is filled only on the selected row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["classifier", "params", "val_accuracy", "test_accuracy"])
        for params, acc in result.table:
            chosen = params == result.best_params
            w.writerow([result.kind, params_to_str(params), f"{acc:.6f}",
                        f"{test_accuracy:.6f}" if chosen else ""])
