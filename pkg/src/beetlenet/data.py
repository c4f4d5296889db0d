"""Crown annotations, square patch extraction, stratified splits and
training-set normalization."""
from __future__ import annotations

import csv
import io
import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataError(Exception):
    """Bad or inconsistent input data."""


class ParseError(DataError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class AttackStage(enum.IntEnum):
    """Crown discoloration stage. The ordinal order is fixed and used for
    every logit vector, confusion matrix row and tie-break."""

    GREEN = 0
    YELLOW = 1
    RED = 2
    LEAFLESS = 3

    @property
    def label(self):
        return self.name.capitalize()

    @classmethod
    def parse(cls, text):
        for stage in cls:
            if stage.label == text:
                return stage
        raise ValueError(f"unknown attack stage {text!r}")


STAGE_LABELS = tuple(s.label for s in AttackStage)
NUM_CLASSES = len(AttackStage)


@dataclass(frozen=True)
class FlightSpec:
    name: str
    month: str
    altitude: int


FLIGHTS = {
    "Jun60": FlightSpec("Jun60", "June", 60),
    "Jul90": FlightSpec("Jul90", "July", 90),
    "Jul100": FlightSpec("Jul100", "July", 100),
    "Aug90": FlightSpec("Aug90", "August", 90),
    "Aug100": FlightSpec("Aug100", "August", 100),
}

# Per-flight class totals (Green, Yellow, Red, Leafless) and split sizes of
# the reference dataset, plus the Green train counts forced by the
# balance-to-green augmented totals (augmented = 4 * green_train).
REFERENCE_CLASS_COUNTS = {
    "Jun60": (68, 34, 24, 25),
    "Jul90": (81, 19, 26, 28),
    "Jul100": (103, 28, 48, 26),
    "Aug90": (141, 45, 52, 33),
    "Aug100": (98, 49, 48, 25),
}
REFERENCE_SPLITS = {  # (train, val, test)
    "Jun60": (128, 7, 16),
    "Jul90": (130, 7, 17),
    "Jul100": (174, 10, 21),
    "Aug90": (230, 13, 28),
    "Aug100": (187, 11, 22),
}
REFERENCE_AUGMENTED_TRAIN = {"Jun60": 232, "Jul90": 276, "Jul100": 352, "Aug90": 480, "Aug100": 332}
PINNED_GREEN_TRAIN = {name: total // 4 for name, total in REFERENCE_AUGMENTED_TRAIN.items()}

DEFAULT_PATCH_SIDE = 100
ANNOTATION_HEADER = ["flight", "tree_id", "center_x", "center_y", "stage"]


@dataclass(frozen=True)
class TreeAnnotation:
    flight: str
    tree_id: str
    center_x: int
    center_y: int
    stage: AttackStage


@dataclass(eq=False)
class CrownPatch:
    pixels: np.ndarray
    stage: AttackStage
    flight: str
    tree_id: str
    synthetic: bool = False

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] != px.shape[1]:
            raise DataError(f"patch {self.tree_id}: expected square HxWx3 array, got {px.shape}")
        if px.dtype != np.uint8:
            raise DataError(f"patch {self.tree_id}: expected uint8 pixels, got {px.dtype}")
        self.pixels = px
        self.stage = AttackStage(self.stage)

    @property
    def side(self):
        return self.pixels.shape[0]


@dataclass
class DatasetSplit:
    train: list
    val: list
    test: list
    seed: int

    def counts(self):
        return {name: class_counts(getattr(self, name)) for name in ("train", "val", "test")}


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self):
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def class_counts(patches):
    counts = [0] * NUM_CLASSES
    for p in patches:
        counts[int(p.stage)] += 1
    return counts


# ------------------------------------------------------------ annotations --

def parse_annotations(csv_text):
    """Parse the annotation CSV into :class:`TreeAnnotation` records.

    Raises :class:`ParseError` carrying the 1-based line number of the first
    malformed row.
    """
    lines = csv_text.splitlines()
    if not lines:
        raise ParseError(1, "missing header")
    header = [h.strip() for h in lines[0].lstrip("﻿").split(",")]
    if header != ANNOTATION_HEADER:
        raise ParseError(1, f"expected header {','.join(ANNOTATION_HEADER)!r}")
    out = []
    seen = set()
    for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(ANNOTATION_HEADER):
            raise ParseError(lineno, f"expected {len(ANNOTATION_HEADER)} columns, got {len(row)}")
        flight, tree_id, cx, cy, stage = (v.strip() for v in row)
        if flight not in FLIGHTS:
            raise ParseError(lineno, f"unknown flight {flight!r}")
        if not tree_id:
            raise ParseError(lineno, "empty tree_id")
        try:
            cx_i, cy_i = int(cx), int(cy)
        except ValueError:
            raise ParseError(lineno, f"non-integer coordinates ({cx!r}, {cy!r})") from None
        try:
            st = AttackStage.parse(stage)
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from None
        if (flight, tree_id) in seen:
            raise ParseError(lineno, f"duplicate tree_id {tree_id!r} in flight {flight}")
        seen.add((flight, tree_id))
        out.append(TreeAnnotation(flight, tree_id, cx_i, cy_i, st))
    return out


def format_annotations(annotations):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ANNOTATION_HEADER)
    for a in annotations:
        w.writerow([a.flight, a.tree_id, a.center_x, a.center_y, a.stage.label])
    return buf.getvalue()


# ---------------------------------------------------------------- rasters --

def load_raster(path):
    """Read an 8-bit RGB orthomosaic (PNG or uncompressed TIFF)."""
    from PIL import Image

    path = Path(path)
    if not path.exists():
        raise DataError(f"raster not found: {path}")
    with Image.open(path) as im:
        if im.mode not in ("RGB", "RGBA"):
            raise DataError(f"{path}: expected an 8-bit RGB raster, got mode {im.mode}")
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr


def save_png(path, pixels):
    from PIL import Image

    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def extract_patch(raster, annotation, side=DEFAULT_PATCH_SIDE):
    """Crop the ``side`` x ``side`` window centred on the annotated crown.

    The window spans rows ``cy - side//2 .. cy - side//2 + side - 1`` (same
    for columns); parts falling outside the raster are zero-filled.
    """
    raster = np.asarray(raster)
    if side < 2:
        raise DataError(f"patch side must be >= 2, got {side}")
    if raster.ndim != 3 or raster.shape[2] != 3:
        raise DataError(f"raster must be HxWx3, got shape {raster.shape}")
    h, w = raster.shape[:2]
    cx, cy = annotation.center_x, annotation.center_y
    if not (0 <= cx < w and 0 <= cy < h):
        raise DataError(f"tree {annotation.tree_id}: center ({cx},{cy}) outside {w}x{h} raster")
    top, left = cy - side // 2, cx - side // 2
    out = np.zeros((side, side, 3), dtype=np.uint8)
    r0, r1 = max(top, 0), min(top + side, h)
    c0, c1 = max(left, 0), min(left + side, w)
    out[r0 - top:r1 - top, c0 - left:c1 - left] = raster[r0:r1, c0:c1]
    return CrownPatch(out, annotation.stage, annotation.flight, annotation.tree_id)


# ----------------------------------------------------------------- splits --

def _largest_remainder(weights, total):
    """Integer apportionment of ``total`` proportional to ``weights``;
    remainder ties go to the lower index."""
    weights = np.asarray(weights, dtype=np.float64)
    if total == 0 or weights.sum() == 0:
        return [0] * len(weights)
    quotas = weights * total / weights.sum()
    base = np.floor(quotas).astype(int)
    rem = quotas - base
    short = total - int(base.sum())
    order = sorted(range(len(weights)), key=lambda i: (-rem[i], i))
    for i in order[:short]:
        base[i] += 1
    return [int(v) for v in base]


def allocate_split_counts(class_sizes, val_count, test_count, pinned_train=None):
    """Per-class (train, val, test) counts.

    Train counts are proportional to class size by largest remainder;
    classes listed in ``pinned_train`` get their fixed train count and the
    rest of the train budget is shared among the others. Validation counts
    are then apportioned over what is left and test takes the remainder.
    """
    sizes = [int(s) for s in class_sizes]
    total = sum(sizes)
    pinned = {int(k): int(v) for k, v in (pinned_train or {}).items()}
    if val_count < 0 or test_count < 0:
        raise DataError("split counts must be non-negative")
    if val_count + test_count >= total:
        raise DataError(f"val+test ({val_count}+{test_count}) must be smaller than the {total} samples")
    train_total = total - val_count - test_count
    for c, v in pinned.items():
        if not 0 <= v <= sizes[c]:
            raise DataError(f"pinned train count {v} for {AttackStage(c).label} exceeds its {sizes[c]} samples")
    free = [c for c in range(len(sizes)) if c not in pinned]
    budget = train_total - sum(pinned.values())
    if budget < 0 or budget > sum(sizes[c] for c in free):
        raise DataError("pinned train counts are infeasible for the requested split sizes")
    train = [0] * len(sizes)
    for c, v in pinned.items():
        train[c] = v
    for c, v in zip(free, _largest_remainder([sizes[c] for c in free], budget)):
        train[c] = v
    # proportional rounding can overshoot a small class when others are pinned
    for c in free:
        while train[c] > sizes[c]:
            train[c] -= 1
            spare = max((k for k in free if train[k] < sizes[k]), key=lambda k: sizes[k] - train[k])
            train[spare] += 1
    left = [s - t for s, t in zip(sizes, train)]
    val = _largest_remainder(left, val_count)
    test = [l - v for l, v in zip(left, val)]
    return train, val, test


def stratified_split(patches, val_count, test_count, seed, pinned_train=None):
    """Partition patches into disjoint train/val/test lists.

    ``pinned_train`` optionally maps AttackStage to a fixed train count (used
    to replay the reference splits). Membership within a class is drawn by a
    seeded permutation; each output list keeps input order.
    """
    patches = list(patches)
    sizes = class_counts(patches)
    if any(s == 0 for s in sizes):
        missing = [AttackStage(c).label for c, s in enumerate(sizes) if s == 0]
        raise DataError(f"every class needs at least one sample; missing {missing}")
    train_n, val_n, _ = allocate_split_counts(sizes, val_count, test_count, pinned_train)
    rng = np.random.default_rng(seed)
    which = np.empty(len(patches), dtype=np.int8)
    for c in range(NUM_CLASSES):
        idx = np.array([i for i, p in enumerate(patches) if p.stage == c])
        idx = idx[rng.permutation(len(idx))]
        which[idx[:train_n[c]]] = 0
        which[idx[train_n[c]:train_n[c] + val_n[c]]] = 1
        which[idx[train_n[c] + val_n[c]:]] = 2
    parts = ([], [], [])
    for p, w in zip(patches, which):
        parts[w].append(p)
    return DatasetSplit(train=parts[0], val=parts[1], test=parts[2], seed=seed)


def write_split_manifest(split, directory, flight):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = [(p.tree_id, name) for name in ("train", "val", "test") for p in getattr(split, name)]
    with open(directory / f"{flight}_split.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tree_id", "split"])
        w.writerows(rows)
    meta = {"flight": flight, "seed": split.seed, "counts": split.counts()}
    (directory / f"{flight}_split.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_split_manifest(directory, flight):
    path = Path(directory) / f"{flight}_split.csv"
    if not path.exists():
        raise DataError(f"split manifest not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    seed = json.loads((Path(directory) / f"{flight}_split.json").read_text())["seed"]
    return {r["tree_id"]: r["split"] for r in rows}, seed


def apply_manifest(patches, assignment, seed):
    by_id = {p.tree_id: p for p in patches}
    missing = set(assignment) - set(by_id)
    if missing:
        raise DataError(f"split manifest references unknown trees: {sorted(missing)[:5]}")
    parts = {"train": [], "val": [], "test": []}
    for p in patches:
        if p.tree_id in assignment:
            parts[assignment[p.tree_id]].append(p)
    return DatasetSplit(parts["train"], parts["val"], parts["test"], seed)


# ---------------------------------------------------------- normalization --

def compute_normalization(train, eps_floor=None):
    """Per-channel mean and population std of train pixels scaled to [0, 1].

    A zero-variance channel is an error unless ``eps_floor`` is given, in
    which case std is clamped from below to it.
    """
    if not train:
        raise DataError("cannot compute normalization from an empty train set")
    total = np.zeros(3)
    total_sq = np.zeros(3)
    count = 0
    for p in train:
        px = p.pixels.reshape(-1, 3).astype(np.float64) / 255.0
        total += px.sum(axis=0)
        count += px.shape[0]
    mean = total / count
    for p in train:
        px = p.pixels.reshape(-1, 3).astype(np.float64) / 255.0
        total_sq += ((px - mean) ** 2).sum(axis=0)
    std = np.sqrt(total_sq / count)
    if eps_floor is not None:
        std = np.maximum(std, eps_floor)
    elif np.any(std <= 0):
        raise DataError(f"zero standard deviation in channel(s) {np.flatnonzero(std <= 0).tolist()}; "
                        "pass eps_floor (config key normalization_eps) to clamp it")
    return NormalizationStats(mean=mean, std=std)


def normalize(patch, stats):
    pixels = patch.pixels if isinstance(patch, CrownPatch) else np.asarray(patch)
    return (pixels.astype(np.float64) / 255.0 - stats.mean) / stats.std


def denormalize(values, stats):
    """Inverse of :func:`normalize`, returning pixels/255."""
    return np.asarray(values) * stats.std + stats.mean


# ---------------------------------------------------------- patch archive --

def write_patch_archive(patches, directory):
    """Write patches as PNG files plus an ``index.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tree_id", "flight", "stage", "synthetic", "file"])
        for p in patches:
            fname = f"{p.tree_id}.png"
            save_png(directory / fname, p.pixels)
            w.writerow([p.tree_id, p.flight, p.stage.label, int(p.synthetic), fname])


def read_patch_archive(directory):
    from PIL import Image

    directory = Path(directory)
    index = directory / "index.csv"
    if not index.exists():
        raise DataError(f"patch archive index not found: {index}")
    out = []
    with open(index, newline="") as fh:
        for row in csv.DictReader(fh):
            with Image.open(directory / row["file"]) as im:
                px = np.asarray(im.convert("RGB"), dtype=np.uint8)
            out.append(CrownPatch(px, AttackStage.parse(row["stage"]), row["flight"], row["tree_id"],
                                  synthetic=bool(int(row["synthetic"]))))
    return out
