"""Synthetic crown fixture: a desk-scale stand-in for the UAV dataset."""
from dataclasses import dataclass

import numpy as np

from ..data import NUM_CLASSES, AttackStage, CrownPatch, TreeAnnotation

# per-class base colour bands, (low, high) per RGB channel
CROWN_BANDS = {
    AttackStage.GREEN: ((30, 70), (100, 150), (30, 60)),
    AttackStage.YELLOW: ((170, 210), (160, 200), (40, 80)),
    AttackStage.RED: ((140, 180), (40, 80), (30, 60)),
}
LEAFLESS_GRAY = (110, 160)
LEAFLESS_DENSITY = 0.35
SOIL_BAND = ((120, 140), (95, 115), (70, 85))
PIXEL_NOISE = 8.0


@dataclass
class Fixture:
    patches: list
    annotations: list
    raster: np.ndarray


def _disc_mask(side, cx, cy, r):
    yy, xx = np.mgrid[0:side, 0:side]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def _paint_crown(img, mask, stage, rng):
    if stage == AttackStage.LEAFLESS:
        speckle = mask & (rng.random(mask.shape) < LEAFLESS_DENSITY)
        img[speckle] = rng.uniform(*LEAFLESS_GRAY, size=(int(speckle.sum()), 1))
    else:
        base = np.array([rng.uniform(lo, hi) for lo, hi in CROWN_BANDS[stage]])
        img[mask] = base


def render_crown(stage, side, rng, overlap=0.0):
    """One noisy crown disc on a soil-toned background.

    With probability ``overlap`` a disc of another class is painted first,
    centred near the patch border so part of it intrudes into the crown.
    """
    soil = np.array([rng.uniform(lo, hi) for lo, hi in SOIL_BAND])
    img = np.empty((side, side, 3))
    img[:] = soil
    r = rng.uniform(0.30, 0.42) * side
    c = (side - 1) / 2.0
    cx, cy = c + rng.uniform(-0.08, 0.08, size=2) * side
    if overlap > 0 and rng.random() < overlap:
        other = AttackStage(int((stage + rng.integers(1, NUM_CLASSES)) % NUM_CLASSES))
        ang = rng.uniform(0, 2 * np.pi)
        r2 = 0.3 * side
        d = 0.85 * (r + r2)
        _paint_crown(img, _disc_mask(side, cx + d * np.cos(ang), cy + d * np.sin(ang), r2), other, rng)
    _paint_crown(img, _disc_mask(side, cx, cy, r), AttackStage(stage), rng)
    img += rng.normal(0.0, PIXEL_NOISE, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def make_synthetic_fixture(per_class, side=64, overlap=0.0, seed=0, flight="Jun60"):
    """Render ``per_class`` crowns per attack stage (an int, or four counts
    in stage order), tile them into one raster and emit matching
    annotations whose extracted patches reproduce the rendered crowns."""
    counts = [int(per_class)] * NUM_CLASSES if np.isscalar(per_class) else [int(v) for v in per_class]
    if len(counts) != NUM_CLASSES or min(counts) < 0:
        raise ValueError("per_class must be a non-negative int or four non-negative counts")
    rng = np.random.default_rng(seed)
    patches = []
    for stage in AttackStage:
        for _ in range(counts[stage]):
            px = render_crown(stage, side, rng, overlap)
            patches.append(CrownPatch(px, stage, flight, f"{flight}_t{len(patches):05d}"))
    n = len(patches)
    cols = max(1, int(np.ceil(np.sqrt(n))))
    rows = max(1, int(np.ceil(n / cols)))
    raster = np.zeros((rows * side, cols * side, 3), dtype=np.uint8)
    annotations = []
    for i, p in enumerate(patches):
        r, c = divmod(i, cols)
        raster[r * side:(r + 1) * side, c * side:(c + 1) * side] = p.pixels
        annotations.append(TreeAnnotation(flight, p.tree_id, c * side + side // 2, r * side + side // 2, p.stage))
    return Fixture(patches, annotations, raster)
