"""Resampling primitives shared by augmentation, featurization and the
network input pipeline. Pixel centres sit at integer coordinates."""
import numpy as np

from . import kernels


def _axis_weights(n_in, n_out):
    # half-pixel-centre mapping, edge-clamped
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    return i0, i1, frac


def resize_bilinear(img, out_h, out_w=None):
    """Bilinear resize of an HxW or HxWxC array, returned as float64."""
    out_w = out_h if out_w is None else out_w
    img = np.asarray(img, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        out = img.copy()
    else:
        r0, r1, fr = _axis_weights(h, out_h)
        c0, c1, fc = _axis_weights(w, out_w)
        rows = img[r0] * (1.0 - fr)[:, None, None] + img[r1] * fr[:, None, None]
        out = rows[:, c0] * (1.0 - fc)[None, :, None] + rows[:, c1] * fc[None, :, None]
    return out[:, :, 0] if squeeze else out


def warp_affine(img, matrix, out_shape=None):
    """Resample ``img`` through the forward affine ``matrix`` (2x3, mapping
    input (x, y) to output (x, y)) with bilinear interpolation and zero
    fill outside the source."""
    img = np.asarray(img, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    out_h, out_w = out_shape if out_shape is not None else img.shape[:2]
    inv = invert_affine(matrix)
    out = kernels.warp_bilinear(np.ascontiguousarray(img), inv, int(out_h), int(out_w))
    return out[:, :, 0] if squeeze else out


def invert_affine(matrix):
    m = np.vstack([np.asarray(matrix, dtype=np.float64), [0.0, 0.0, 1.0]])
    return np.linalg.inv(m)[:2]


def to_uint8(values):
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)
