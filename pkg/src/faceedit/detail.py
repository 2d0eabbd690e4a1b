"""Additive detail maps: computation, nine-region partition, protection
masks, warping, flow refinement, and blending."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .config import Config, DEFAULT_CONFIG
from .flow import estimate_flow
from .geometry.model import MorphableModel, REGION_NAMES
from .geometry.raster import GeometryBuffers, WarpField, compose_warp
from .imops import dilate
from .lighting import sh_render

PROTECTED_REGIONS = ("left_eye", "right_eye", "nose", "mouth")


@dataclass
class DetailMap:
    values: np.ndarray  # (H, W, 3) signed residual, never clamped
    valid: np.ndarray   # (H, W) bool

    def copy(self) -> "DetailMap":
        return DetailMap(self.values.copy(), self.valid.copy())


@dataclass
class RegionPartition:
    labels: np.ndarray  # (H, W) uint8, 0 = none, 1..9 per REGION_NAMES order

    def mask(self, name: str) -> np.ndarray:
        return self.labels == (REGION_NAMES.index(name) + 1)

    def union(self, names) -> np.ndarray:
        out = np.zeros_like(self.labels, dtype=bool)
        for name in names:
            out |= self.mask(name)
        return out

    def protected(self) -> np.ndarray:
        return self.union(PROTECTED_REGIONS)


def detail_map(image: np.ndarray, albedo: np.ndarray, buffers: GeometryBuffers,
               theta: np.ndarray) -> DetailMap:
    """Signed residual between the input and its SH reconstruction (valid on coverage)."""
    cov = buffers.coverage_mask
    values = np.zeros_like(image, dtype=np.float64)
    if cov.any():
        shading = sh_render(buffers.normal_map[cov].astype(np.float64), np.asarray(theta, float))
        if shading.ndim == 1:
            shading = shading[:, None]
        values[cov] = image[cov] - albedo[cov] * shading
    return DetailMap(values=values, valid=cov.copy())


def nine_regions(fit, model: MorphableModel, buffers: GeometryBuffers) -> RegionPartition:
    """Project the model's vertex groups through the fit; each covered pixel
    takes the group of its dominant barycentric vertex."""
    vert_region = np.zeros(model.n_vertices, dtype=np.uint8)
    for i, name in enumerate(REGION_NAMES, start=1):
        ids = model.region_groups.get(name)
        if ids is not None and len(ids):
            vert_region[ids] = i
    labels = np.zeros(buffers.shape, dtype=np.uint8)
    cov = buffers.coverage_mask
    if cov.any():
        tris = model.triangles[buffers.triangle_map[cov]]      # (N, 3)
        pick = np.argmax(buffers.bary_map[cov], axis=1)        # dominant vertex
        verts = tris[np.arange(len(tris)), pick]
        labels[cov] = vert_region[verts]
    return RegionPartition(labels=labels)


def protection_mask(partition: RegionPartition, feather_px: float) -> np.ndarray:
    """Weight of the input's own detail: 1 on (dilated) eyes+nose+mouth,
    ramping to 0 over ``feather_px`` outside."""
    protected = partition.protected()
    h, w = protected.shape
    if not protected.any():
        return np.zeros((h, w), dtype=np.float64)
    if feather_px <= 0:
        return protected.astype(np.float64)
    core = dilate(protected, feather_px / 2.0)
    dist = ndimage.distance_transform_edt(~core)
    return np.clip(1.0 - dist / feather_px, 0.0, 1.0)


def warp_detail(reference: DetailMap, warp: WarpField) -> DetailMap:
    """Resample a signed detail map through a warp; invalid where the warp is."""
    values = warp.sample(reference.values)
    sampled_valid = warp.sample(reference.valid.astype(np.float64)) > 0.5
    valid = warp.valid & sampled_valid
    values[~valid] = 0.0
    return DetailMap(values=values, valid=valid)


def flow_refine(moving: np.ndarray, fixed: np.ndarray, init_warp: WarpField,
                config: Config = DEFAULT_CONFIG) -> WarpField:
    """Fine-tune a correspondence warp with optical flow.

    Never returns a warp with higher photometric error than the input warp;
    on failure, the input warp comes back with ``refinement_failed`` set.
    """
    if moving.shape != fixed.shape:
        raise ValueError("images must share dimensions")
    prewarped = init_warp.sample(moving)
    # outside the warp's domain there is nothing to align: feeding the fixed
    # image back in keeps the data term silent there
    valid = init_warp.valid[..., None] if moving.ndim == 3 else init_warp.valid
    prewarped = np.where(valid, prewarped, fixed)
    u, v = estimate_flow(prewarped, fixed, config)
    refined = compose_warp(init_warp, u.astype(np.float32), v.astype(np.float32))

    def photometric(warp: WarpField, domain: np.ndarray) -> float:
        if not domain.any():
            return 0.0
        diff = warp.sample(moving) - fixed
        return float(np.mean(diff[domain] ** 2))

    common = init_warp.valid & refined.valid
    base_err = photometric(init_warp, common)
    if photometric(refined, common) > base_err * (1.0 + 1e-9) + 1e-15:
        failed = WarpField(init_warp.map_x.copy(), init_warp.map_y.copy(),
                           init_warp.valid.copy(), refinement_failed=True)
        return failed
    return refined


def blend_details(input_d: DetailMap, ref_d: DetailMap, weight: np.ndarray) -> DetailMap:
    """Pointwise convex combination; the input's detail wins where the
    reference has no valid data."""
    if input_d.values.shape != ref_d.values.shape:
        raise ValueError("detail maps must share dimensions")
    w = np.where(ref_d.valid, np.asarray(weight, dtype=np.float64), 1.0)
    values = w[..., None] * input_d.values + (1.0 - w[..., None]) * ref_d.values
    return DetailMap(values=values, valid=input_d.valid.copy())
