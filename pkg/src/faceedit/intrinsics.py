"""Shading/albedo split: shading is the pixel intensity (channel mean,
floored), albedo the per-channel ratio. Reconstruction ``albedo * shading``
is exact wherever the floor did not fire, which is what lets the additive
detail map reproduce the input bit-for-bit.

All pipeline math runs on 8-bit values mapped linearly to [0, 1]; no gamma
decode is applied anywhere.
"""

from __future__ import annotations

import numpy as np

from .config import Config, DEFAULT_CONFIG


def decompose(image: np.ndarray, config: Config = DEFAULT_CONFIG) -> tuple[np.ndarray, np.ndarray]:
    """Split an RGB image in [0, 1] into (shading, albedo)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) image")
    shading = np.maximum(image.mean(axis=2), config.shading_floor)
    albedo = image / shading[..., None]
    return shading, albedo


def recompose(shading: np.ndarray, albedo: np.ndarray) -> np.ndarray:
    if shading.ndim == 2:
        shading = shading[..., None]
    return albedo * shading
