"""Maximum-response texture features.

A 38-filter bank (edge and bar filters at 3 scales x 6 orientations, plus a
Gaussian and a Laplacian-of-Gaussian) reduced to 8 responses per pixel by
taking the maximum response magnitude over orientations for each scale and
filter type. Computed on the luma channel.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

_SUPPORT = 49
# finest scale stays above the grid Nyquist so oriented kernels rotate cleanly
_SCALES = (1.2, 2.4, 4.8)
_N_ORIENT = 6
_BLUR_SIGMA = 10.0


_OVERSAMPLE = 5  # kernels are sampled on a finer grid so rotated copies agree


def _grids(theta: float) -> tuple[np.ndarray, np.ndarray]:
    half = _SUPPORT // 2
    n = _SUPPORT * _OVERSAMPLE
    coords = (np.arange(n) + 0.5) / _OVERSAMPLE - (half + 0.5)
    x, y = np.meshgrid(coords, coords)
    xr = x * np.cos(theta) + y * np.sin(theta)
    yr = -x * np.sin(theta) + y * np.cos(theta)
    return xr, yr


def _downsample(f: np.ndarray) -> np.ndarray:
    return f.reshape(_SUPPORT, _OVERSAMPLE, _SUPPORT, _OVERSAMPLE).mean(axis=(1, 3))


def _normalize(f: np.ndarray, zero_mean: bool) -> np.ndarray:
    f = _downsample(f)
    if zero_mean:
        f = f - f.mean()
    return f / np.abs(f).sum()


def _edge_filter(sigma: float, theta: float) -> np.ndarray:
    xr, yr = _grids(theta)
    g = np.exp(-(xr**2) / (2 * sigma**2) - (yr**2) / (2 * (3 * sigma) ** 2))
    return _normalize(-xr / sigma**2 * g, zero_mean=True)


def _bar_filter(sigma: float, theta: float) -> np.ndarray:
    xr, yr = _grids(theta)
    g = np.exp(-(xr**2) / (2 * sigma**2) - (yr**2) / (2 * (3 * sigma) ** 2))
    return _normalize((xr**2 / sigma**4 - 1.0 / sigma**2) * g, zero_mean=True)


def _gaussian_filter() -> np.ndarray:
    xr, yr = _grids(0.0)
    g = _downsample(np.exp(-(xr**2 + yr**2) / (2 * _BLUR_SIGMA**2)))
    return g / g.sum()


def _log_filter() -> np.ndarray:
    xr, yr = _grids(0.0)
    r2 = xr**2 + yr**2
    s2 = _BLUR_SIGMA**2
    f = (r2 - 2 * s2) / s2**2 * np.exp(-r2 / (2 * s2))
    return _normalize(f, zero_mean=True)


_BANK: dict[str, np.ndarray] | None = None


def _bank() -> dict[str, np.ndarray]:
    global _BANK
    if _BANK is None:
        bank: dict[str, np.ndarray] = {}
        for kind, make in (("edge", _edge_filter), ("bar", _bar_filter)):
            for si, sigma in enumerate(_SCALES):
                for oi in range(_N_ORIENT):
                    theta = np.pi * oi / _N_ORIENT
                    bank[f"{kind}{si}_{oi}"] = make(sigma, theta)
        bank["gauss"] = _gaussian_filter()
        bank["log"] = _log_filter()
        _BANK = bank
    return _BANK


def luma(image: np.ndarray) -> np.ndarray:
    """Rec.601 luma of an RGB image in [0, 1]."""
    if image.ndim == 2:
        return image.astype(float)
    return 0.299 * image[..., 0] + 0.587 * image[..., 1] + 0.114 * image[..., 2]


def mr8(image: np.ndarray) -> np.ndarray:
    """(H, W, 8) maximum-response features: 3 edge + 3 bar scales, Gaussian, LoG."""
    gray = luma(image)
    half = _SUPPORT // 2
    padded = np.pad(gray, half, mode="edge")  # replication keeps constants constant
    bank = _bank()
    out = np.empty(gray.shape + (8,), dtype=np.float64)
    idx = 0
    for kind in ("edge", "bar"):
        for si in range(len(_SCALES)):
            responses = [
                fftconvolve(padded, bank[f"{kind}{si}_{oi}"], mode="valid")
                for oi in range(_N_ORIENT)
            ]
            out[..., idx] = np.max(np.abs(np.stack(responses)), axis=0)
            idx += 1
    out[..., 6] = fftconvolve(padded, bank["gauss"], mode="valid")
    out[..., 7] = fftconvolve(padded, bank["log"], mode="valid")
    return out


def feature_stack(image: np.ndarray, textures: np.ndarray | None = None) -> np.ndarray:
    """(H, W, 11) per-pixel vector: 3 color channels + 8 texture responses."""
    if textures is None:
        textures = mr8(image)
    if not np.all(np.isfinite(textures)):
        raise ValueError("non-finite texture responses")
    return np.concatenate([image.astype(np.float64), textures], axis=-1)
