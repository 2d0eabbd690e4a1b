"""Small shared raster utilities: exact-Euclidean morphology, bilinear
sampling, nearest-inside fill. Kept together so every module agrees on
boundary handling and tie-breaking."""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def erode(mask: np.ndarray, radius: float) -> np.ndarray:
    """Binary erosion by a Euclidean disk of the given radius."""
    if radius <= 0:
        return mask.copy()
    if not mask.any():
        return np.zeros_like(mask, dtype=bool)
    dist = ndimage.distance_transform_edt(mask)
    return dist > radius


def dilate(mask: np.ndarray, radius: float) -> np.ndarray:
    """Binary dilation by a Euclidean disk of the given radius."""
    if radius <= 0:
        return mask.copy()
    if mask.all():
        return np.ones_like(mask, dtype=bool)
    dist = ndimage.distance_transform_edt(~mask)
    return mask | (dist <= radius)


def nearest_inside_indices(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For every pixel, the (row, col) of the nearest True pixel.

    Equidistant sources resolve to the lexicographically smaller (row, col);
    this tie-break is part of the documented fill semantics.
    """
    if not mask.any():
        raise ValueError("mask is empty")
    _, (ir, ic) = ndimage.distance_transform_edt(~mask, return_indices=True)
    return ir, ic


def sample_bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Bilinear sampling at continuous (x, y) image positions.

    ``img`` may be (H, W) or (H, W, C); samples outside the frame get ``fill``.
    """
    h, w = img.shape[:2]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0

    def gather(yy, xx):
        inside = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        yc = np.clip(yy, 0, h - 1)
        xc = np.clip(xx, 0, w - 1)
        vals = img[yc, xc]
        if img.ndim == 3:
            vals = np.where(inside[..., None], vals, fill)
        else:
            vals = np.where(inside, vals, fill)
        return vals

    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = gather(y0, x0) * (1 - fx) + gather(y0, x0 + 1) * fx
    bot = gather(y0 + 1, x0) * (1 - fx) + gather(y0 + 1, x0 + 1) * fx
    return top * (1 - fy) + bot * fy


def gaussian(img: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian blur over spatial axes only (channels untouched)."""
    if sigma <= 0:
        return img.copy()
    if img.ndim == 3:
        sig = (sigma, sigma, 0)
    else:
        sig = sigma
    return ndimage.gaussian_filter(img.astype(float), sig, mode="nearest")


def quantize_u8(img: np.ndarray) -> np.ndarray:
    """[0,1] float image to uint8 with round-half-to-even, shared by CLI and service."""
    return np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
