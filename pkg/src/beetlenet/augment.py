"""Minority-class augmentation strategies and the balance-to-majority rule."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import NUM_CLASSES, AttackStage, CrownPatch, DataError, class_counts
from .imaging import resize_bilinear, to_uint8, warp_affine

LUMA = np.array([0.299, 0.587, 0.114])
CROP_FACTOR = 0.85
BLUR_KERNEL = 5


class AugmentationStrategy(str, enum.Enum):
    NONE = "None"
    AFFINE_WARP = "AffineWarp"
    FLIPS = "Flips"
    ROTATIONS = "Rotations"
    CROP85 = "Crop85"
    COLOR_JITTER = "ColorJitter"
    GAUSSIAN_BLUR5 = "GaussianBlur5"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        for s in cls:
            if s.value.lower() == str(text).lower():
                return s
        raise ValueError(f"unknown augmentation strategy {text!r}; choose from {[s.value for s in cls]}")


@dataclass(frozen=True)
class AugmentationParams:
    max_rotation_deg: float = 15.0
    max_shear_deg: float = 10.0
    scale_range: tuple = (0.9, 1.1)
    max_translation: float = 0.10
    brightness: tuple = (0.6, 1.4)
    contrast: tuple = (0.6, 1.4)
    saturation: tuple = (0.6, 1.4)
    blur_sigma: float = 1.0
    crop_factor: float = CROP_FACTOR
    blur_kernel: int = BLUR_KERNEL
    rng_seed: int = 0

    def __post_init__(self):
        if self.crop_factor != CROP_FACTOR:
            raise ValueError("crop_factor is fixed at 0.85")
        if self.blur_kernel != BLUR_KERNEL:
            raise ValueError("blur_kernel is fixed at 5")
        for name in ("scale_range", "brightness", "contrast", "saturation"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} range must satisfy lo < hi, got {(lo, hi)}")
        if self.blur_sigma <= 0:
            raise ValueError("blur_sigma must be positive")


@dataclass
class BalancePlan:
    majority: AttackStage
    majority_count: int
    deficits: list

    @property
    def balanced_total(self):
        return self.majority_count * len(self.deficits)


def _relabel(patch, pixels):
    return replace(patch, pixels=pixels, synthetic=True)


# ------------------------------------------------------------- planning ----

def plan_balance(train):
    counts = class_counts(train)
    empty = [AttackStage(c).label for c, n in enumerate(counts) if n == 0]
    if empty:
        raise DataError(f"cannot balance: no training samples for {empty}")
    majority = AttackStage(int(np.argmax(counts)))
    top = counts[majority]
    return BalancePlan(majority=majority, majority_count=top, deficits=[top - n for n in counts])


# ----------------------------------------------------------- transforms ----

def affine_matrix(side, rotation_deg=0.0, shear_deg=0.0, scale=1.0, translate=(0.0, 0.0)):
    """Forward 2x3 map about the patch centre: output = A @ [x, y, 1]."""
    c = (side - 1) / 2.0
    th = math.radians(rotation_deg)
    sh = math.radians(shear_deg)
    rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    shear = np.array([[1.0, math.tan(sh)], [0.0, 1.0]])
    lin = rot @ shear * scale
    offset = np.array([c, c]) + np.asarray(translate, dtype=np.float64) - lin @ np.array([c, c])
    return np.hstack([lin, offset[:, None]])


def sample_affine(side, params, rng):
    rot = rng.uniform(-params.max_rotation_deg, params.max_rotation_deg)
    shear = rng.uniform(-params.max_shear_deg, params.max_shear_deg)
    scale = rng.uniform(*params.scale_range)
    t = rng.uniform(-params.max_translation, params.max_translation, size=2) * side
    return affine_matrix(side, rot, shear, scale, t)


def apply_affine_warp(patch, params, rng, matrix=None):
    if matrix is None:
        matrix = sample_affine(patch.side, params, rng)
    return _relabel(patch, to_uint8(warp_affine(patch.pixels, matrix)))


def apply_flip(patch, axis):
    if axis == "horizontal":
        px = patch.pixels[:, ::-1]
    elif axis == "vertical":
        px = patch.pixels[::-1, :]
    else:
        raise ValueError(f"flip axis must be 'horizontal' or 'vertical', got {axis!r}")
    return _relabel(patch, np.ascontiguousarray(px))


def apply_rotation(patch, angle):
    """Clockwise rotation by a right angle; a pure pixel permutation."""
    if angle not in (90, 180, 270):
        raise ValueError(f"rotation angle must be 90, 180 or 270, got {angle}")
    return _relabel(patch, np.ascontiguousarray(np.rot90(patch.pixels, k=-(angle // 90))))


def crop_resize(pixels, top, left, window):
    crop = pixels[top:top + window, left:left + window]
    return resize_bilinear(crop, pixels.shape[0], pixels.shape[1])


def apply_crop85(patch, rng, position=None):
    side = patch.side
    window = int(round(CROP_FACTOR * side))
    if window < 2:
        raise ValueError(f"crop window of {window}px is too small for a {side}px patch")
    if position is None:
        top, left = (int(v) for v in rng.integers(0, side - window + 1, size=2))
    else:
        top, left = position
    return _relabel(patch, to_uint8(crop_resize(patch.pixels, top, left, window)))


def jitter_pixels(pixels, brightness=1.0, contrast=1.0, saturation=1.0):
    """Brightness, then contrast about mean luma, then saturation about the
    per-pixel gray value; clamped to [0, 255] after each step."""
    x = np.clip(np.asarray(pixels, dtype=np.float64) * brightness, 0.0, 255.0)
    m = float((x @ LUMA).mean())
    x = np.clip((x - m) * contrast + m, 0.0, 255.0)
    gray = (x @ LUMA)[..., None]
    x = np.clip((x - gray) * saturation + gray, 0.0, 255.0)
    return x


def apply_color_jitter(patch, params, rng, factors=None):
    if factors is None:
        factors = (rng.uniform(*params.brightness), rng.uniform(*params.contrast), rng.uniform(*params.saturation))
    return _relabel(patch, to_uint8(jitter_pixels(patch.pixels, *factors)))


def gaussian_kernel1d(sigma, size=BLUR_KERNEL):
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img, sigma):
    """Separable 5x5 Gaussian blur with reflect (mirror without edge
    repetition) borders, on float data."""
    k = gaussian_kernel1d(sigma)
    r = len(k) // 2
    img = np.asarray(img, dtype=np.float64)
    pad = [(r, r), (r, r)] + [(0, 0)] * (img.ndim - 2)
    p = np.pad(img, pad, mode="reflect")
    h, w = img.shape[:2]
    tmp = sum(k[i] * p[i:i + h] for i in range(len(k)))
    return sum(k[j] * tmp[:, j:j + w] for j in range(len(k)))


def apply_gaussian_blur(patch, sigma=1.0):
    return _relabel(patch, to_uint8(gaussian_blur(patch.pixels, sigma)))


def apply_strategy(patch, strategy, params, rng):
    s = AugmentationStrategy.parse(strategy)
    if s is AugmentationStrategy.AFFINE_WARP:
        return apply_affine_warp(patch, params, rng)
    if s is AugmentationStrategy.FLIPS:
        return apply_flip(patch, "horizontal" if rng.random() < 0.5 else "vertical")
    if s is AugmentationStrategy.ROTATIONS:
        return apply_rotation(patch, int(rng.choice([90, 180, 270])))
    if s is AugmentationStrategy.CROP85:
        return apply_crop85(patch, rng)
    if s is AugmentationStrategy.COLOR_JITTER:
        return apply_color_jitter(patch, params, rng)
    if s is AugmentationStrategy.GAUSSIAN_BLUR5:
        return apply_gaussian_blur(patch, params.blur_sigma)
    raise ValueError("strategy None performs no augmentation; skip balancing instead")


# ------------------------------------------------------------ balancing ----

_MASK64 = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master, *path):
    """Order-independent per-sample seed: splitmix64 folded over the path."""
    s = splitmix64(int(master) & _MASK64)
    for p in path:
        s = splitmix64(s ^ (int(p) & _MASK64))
    return s


@dataclass
class ManifestRow:
    tree_id: str
    source_tree_id: str
    strategy: str
    seed: int


def balance_dataset(train, strategy, params=None, seed=0):
    """Append synthetic minority samples until every class matches the
    majority count.

    Returns ``(augmented_train, manifest_rows)``. Source patches are drawn
    uniformly with replacement from the class; each synthetic sample gets
    its own RNG seeded by ``derive_seed(seed, class, index)``.
    """
    params = params or AugmentationParams()
    s = AugmentationStrategy.parse(strategy)
    if s is AugmentationStrategy.NONE:
        raise ValueError("strategy None requested: skip balancing rather than calling balance_dataset")
    plan = plan_balance(train)
    by_class = [[p for p in train if p.stage == c] for c in range(NUM_CLASSES)]
    out = list(train)
    manifest = []
    for c in range(NUM_CLASSES):
        for k in range(plan.deficits[c]):
            sample_seed = derive_seed(seed, c, k)
            rng = np.random.default_rng(sample_seed)
            src = by_class[c][int(rng.integers(len(by_class[c])))]
            new = apply_strategy(src, s, params, rng)
            new = replace(new, tree_id=f"{src.tree_id}__{s.value}{k:04d}")
            out.append(new)
            manifest.append(ManifestRow(new.tree_id, src.tree_id, s.value, sample_seed))
    return out, manifest


def write_augment_manifest(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tree_id", "source_tree_id", "strategy", "seed"])
        for r in rows:
            w.writerow([r.tree_id, r.source_tree_id, r.strategy, r.seed])
