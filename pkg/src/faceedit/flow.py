"""Coarse-to-fine variational optical flow (brightness constancy plus
quadratic smoothness), used to fine-tune mesh-based correspondence.

``estimate_flow(moving, fixed)`` returns (u, v) such that sampling the
moving image at ``(x + u, y + v)`` reproduces the fixed image.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .config import Config, DEFAULT_CONFIG
from .imops import sample_bilinear

_AVG_KERNEL = np.array([[0.0, 0.25, 0.0], [0.25, 0.0, 0.25], [0.0, 0.25, 0.0]])


def _to_gray(img: np.ndarray) -> np.ndarray:
    # the smoothness weight is calibrated against 8-bit intensity magnitudes
    if img.ndim == 3:
        gray = img.mean(axis=2) * 255.0
    else:
        gray = img.astype(float) * 255.0
    # brightness constancy runs on band-passed luma: smooth illumination
    # differences between the two frames would otherwise drag the flow
    return gray - ndimage.gaussian_filter(gray, 10.0, mode="nearest")


def _downsample(img: np.ndarray) -> np.ndarray:
    smoothed = ndimage.gaussian_filter(img, 1.0, mode="nearest")
    return smoothed[::2, ::2]


def _warp(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    h, w = img.shape
    cols, rows = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    # clamp to the frame: zero fill would feed a darkening loop at the border
    xs = np.clip(cols + u, 0, w - 1)
    ys = np.clip(rows + v, 0, h - 1)
    return sample_bilinear(img, xs, ys)


def _hs_level(moving, fixed, u, v, alpha, warp_iters, solver_iters):
    # pre-smoothing keeps the linearization honest near the grid Nyquist
    moving = ndimage.gaussian_filter(moving, 1.0, mode="nearest")
    fixed = ndimage.gaussian_filter(fixed, 1.0, mode="nearest")
    for _ in range(warp_iters):
        warped = _warp(moving, u, v)
        avg = 0.5 * (warped + fixed)
        iy, ix = np.gradient(avg)
        it = warped - fixed
        c = it - ix * u - iy * v
        denom = alpha + ix * ix + iy * iy
        uu, vv = u, v
        for _ in range(solver_iters):
            ub = ndimage.convolve(uu, _AVG_KERNEL, mode="nearest")
            vb = ndimage.convolve(vv, _AVG_KERNEL, mode="nearest")
            shared = (ix * ub + iy * vb + c) / denom
            uu = ub - ix * shared
            vv = vb - iy * shared
        # median filtering between warps suppresses local linearization blowups
        u = ndimage.median_filter(uu, size=5, mode="nearest")
        v = ndimage.median_filter(vv, size=5, mode="nearest")
    return u, v


def estimate_flow(
    moving: np.ndarray,
    fixed: np.ndarray,
    config: Config = DEFAULT_CONFIG,
    solver_iters: int = 60,
) -> tuple[np.ndarray, np.ndarray]:
    """Multi-scale flow from ``fixed`` pixel positions into ``moving``."""
    m = _to_gray(moving)
    f = _to_gray(fixed)
    if m.shape != f.shape:
        raise ValueError("images must share dimensions")

    pyramid = [(m, f)]
    for _ in range(config.flow_levels - 1):
        if min(pyramid[-1][0].shape) < 16:
            break
        pyramid.append((_downsample(pyramid[-1][0]), _downsample(pyramid[-1][1])))

    u = np.zeros_like(pyramid[-1][0])
    v = np.zeros_like(pyramid[-1][0])
    for level, (lm, lf) in enumerate(reversed(pyramid)):
        if level > 0:
            zoom = (lm.shape[0] / u.shape[0], lm.shape[1] / u.shape[1])
            u = ndimage.zoom(u, zoom, order=1) * zoom[1]
            v = ndimage.zoom(v, zoom, order=1) * zoom[0]
        u, v = _hs_level(lm, lf, u, v, config.flow_alpha, config.flow_warp_iters, solver_iters)
        # cap in full-resolution pixel units at every level
        cap = config.flow_cap_px * lm.shape[1] / f.shape[1]
        u = np.clip(u, -cap, cap)
        cap = config.flow_cap_px * lm.shape[0] / f.shape[0]
        v = np.clip(v, -cap, cap)
    return u, v
