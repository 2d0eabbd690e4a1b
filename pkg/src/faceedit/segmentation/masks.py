"""Nested face masks derived from the rasterized face coverage."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import Config, DEFAULT_CONFIG
from ..imops import dilate, erode


@dataclass
class RegionMasks:
    conservative: np.ndarray
    normal: np.ndarray
    aggressive: np.ndarray

    def validate(self) -> None:
        if np.any(self.conservative & ~self.normal) or np.any(self.normal & ~self.aggressive):
            raise ValueError("masks must nest: conservative within normal within aggressive")


def region_masks(coverage: np.ndarray, config: Config = DEFAULT_CONFIG) -> RegionMasks:
    """Erode coverage for the conservative mask, dilate for normal/aggressive.

    Radii are fractions of the face bounding-box diagonal; the aggressive mask
    dilates the normal one further.
    """
    coverage = coverage.astype(bool)
    if not coverage.any():
        empty = np.zeros_like(coverage)
        return RegionMasks(empty, empty.copy(), empty.copy())
    ys, xs = np.nonzero(coverage)
    diag = float(np.hypot(ys.max() - ys.min() + 1, xs.max() - xs.min() + 1))
    r_c = config.mask_conservative_frac * diag
    r_n = config.mask_normal_frac * diag
    r_a = config.mask_aggressive_frac * diag
    conservative = erode(coverage, r_c)
    normal = dilate(coverage, r_n)
    aggressive = dilate(normal, r_a)
    out = RegionMasks(conservative, normal, aggressive)
    out.validate()
    return out
