"""Deterministic synthetic portraits rendered from the sample face model.

Each portrait is generated through the package's own forward model
(chroma-textured albedo times first-order SH shading plus an interior
luminance detail layer), so the recovery pipeline has a well-defined ground
truth: landmarks, pose, morph coefficients, and SH coefficients.

Design constraints that the editing invariants rely on:

* per-pixel channel mean of the generated albedo is exactly 1, so the
  intensity split reproduces the true SH shading on skin;
* skin region sits strictly inside the mesh coverage (hard color edge for
  the matting stage) and the background is a constant color;
* luminance detail and chroma texture taper to zero near the skin boundary,
  keeping label-boundary feathering harmless;
* rendered shading stays well above the shading floor everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from .geometry import FaceFit, MorphableModel, build_mesh, rasterize
from .imops import erode
from .lighting import sh_render


@dataclass
class Portrait:
    name: str
    image: np.ndarray          # (H, W, 3) in [0, 1]
    landmarks: np.ndarray      # (L, 2)
    fit_true: FaceFit
    theta_true: np.ndarray     # (4,)
    background: np.ndarray     # (3,)
    skin_mask: np.ndarray | None = None
    nose_pattern: np.ndarray | None = None  # injected detail, when requested


_BASE_CHROMA = np.array([1.25, 0.98, 0.77])  # channel mean exactly 1
_BACKGROUNDS = (
    (0.42, 0.45, 0.50),
    (0.55, 0.50, 0.44),
    (0.35, 0.38, 0.35),
    (0.60, 0.60, 0.62),
    (0.30, 0.33, 0.40),
    (0.48, 0.42, 0.47),
)


def _smooth_field(shape, sigma, rng, amplitude):
    field = ndimage.gaussian_filter(rng.normal(size=shape), sigma, mode="nearest")
    peak = np.abs(field).max()
    if peak > 0:
        field = field / peak * amplitude
    return field


def _surface_coords(buffers, model) -> np.ndarray:
    """(H, W, 2) canonical surface coordinates (mean-mesh x, y) per covered
    pixel; textures parameterized on them stay attached to the face across
    poses and morphs."""
    h, w = buffers.shape
    coords = np.zeros((h, w, 2))
    cov = buffers.coverage_mask
    if cov.any():
        tris = model.triangles[buffers.triangle_map[cov]]
        pts = np.einsum("nk,nkc->nc", buffers.bary_map[cov].astype(np.float64),
                        model.mean_mesh[tris][:, :, :2])
        coords[cov] = pts
    return coords


def _surface_speckle(coords, rng, n_waves=24):
    """Deterministic band-limited speckle over surface coordinates."""
    freq = rng.uniform(8.0, 28.0, size=(n_waves, 2))
    phase = rng.uniform(0, 2 * np.pi, size=n_waves)
    amp = rng.uniform(0.5, 1.0, size=n_waves)
    field = np.zeros(coords.shape[:2])
    for k in range(n_waves):
        field += amp[k] * np.sin(coords[..., 0] * freq[k, 0] + coords[..., 1] * freq[k, 1] + phase[k])
    return field / np.abs(field).max()


def make_portrait(
    model: MorphableModel,
    seed: int = 0,
    width: int = 272,
    height: int = 288,
    hair: bool = False,
    yaw_offset_deg: float = 0.0,
    nose_detail: bool = False,
) -> Portrait:
    rng = np.random.default_rng(1000 + seed)
    omega_i = rng.normal(0.0, 0.12, model.n_identity)
    omega_e = rng.normal(0.0, 0.10, model.n_expression)
    angles = rng.uniform([-12.0, -8.0, -6.0], [12.0, 8.0, 6.0])
    angles[0] += yaw_offset_deg
    rot = Rotation.from_euler("yxz", angles, degrees=True).as_matrix()
    scale = rng.uniform(95.0, 112.0)
    center = np.array([width / 2 + rng.uniform(-8, 8), height / 2 + rng.uniform(-4, 10)])
    fit = FaceFit(omega_i, omega_e, rot, center, scale)

    verts = build_mesh(model, omega_i, omega_e)
    landmarks = fit.project(verts[model.landmark_indices])
    buffers = rasterize(fit, model, width, height)
    cov = buffers.coverage_mask
    skin = erode(cov, 3.0)
    surf = _surface_coords(buffers, model)

    theta = np.array([
        rng.uniform(1.35, 1.6),
        rng.uniform(-0.15, 0.15),
        rng.uniform(-0.12, 0.12),
        rng.uniform(0.22, 0.34),
    ])
    shading = sh_render(buffers.normal_map.astype(np.float64), theta)
    assert shading[cov].min() > 0.2, "lighting dipped too low for a clean fixture"

    # Chroma texture with zero channel sum, attached to the surface so the
    # same face carries the same texture under any pose. It vanishes within
    # the reach of boundary mirror processing (shrink + ring) so transfers
    # are idempotent at the face rim.
    rho_model = np.sqrt(surf[..., 0] ** 2 + (surf[..., 1] / 1.15) ** 2)
    taper = np.clip((0.56 - rho_model) / 0.10, 0.0, 1.0)
    a = 0.10 * np.sin(surf[..., 0] * 6.5 + 1.2) * np.sin(surf[..., 1] * 5.1 + 0.4 + seed) * taper
    b = 0.08 * np.sin(surf[..., 0] * 3.7 - 0.8 + seed) * np.sin(surf[..., 1] * 8.3 + 1.7) * taper
    albedo = np.empty((height, width, 3))
    albedo[..., 0] = _BASE_CHROMA[0] + a
    albedo[..., 1] = _BASE_CHROMA[1] - 0.5 * a + 0.5 * b
    albedo[..., 2] = _BASE_CHROMA[2] - 0.5 * a - 0.5 * b

    # interior luminance detail: wrinkle bands + speckle, zero near the edge
    deep = np.clip((0.56 - rho_model) / 0.07, 0.0, 1.0) ** 2
    wrinkle = 0.03 * np.sin(surf[..., 1] * 35.0 + seed) * np.clip(np.sin(surf[..., 0] * 4.0), 0, 1)
    pores = 0.02 * _surface_speckle(surf, rng)
    detail_luma = (wrinkle + pores) * deep
    if nose_detail:
        rn = np.sqrt(surf[..., 0] ** 2 + (surf[..., 1] - 0.02) ** 2)
        pattern = 0.08 * np.sin(rn * 55.0) * (rn < 0.15) * deep
        detail_luma = detail_luma + pattern
    detail_luma -= skin * (detail_luma[skin].mean() if skin.any() else 0.0)

    image = np.empty((height, width, 3))
    image[:] = np.array(_BACKGROUNDS[seed % len(_BACKGROUNDS)])
    # multi-scale background texture and sensor-like noise keep classifier
    # covariances away from the floor; on skin, noise is absorbed into the
    # recovered detail layer
    image += (_smooth_field((height, width), 12.0, rng, 0.025)
              + _smooth_field((height, width), 3.0, rng, 0.012))[..., None]
    image += rng.normal(0.0, 0.008, size=image.shape)
    face_px = albedo * shading[..., None] + detail_luma[..., None]
    image[skin] = face_px[skin]

    if hair:
        band = _hair_band(cov, height, width)
        image[band] = np.array([0.12, 0.10, 0.09])

    image = np.clip(image, 0.0, 1.0)
    return Portrait(
        name=f"portrait{seed}",
        image=image,
        landmarks=landmarks,
        fit_true=fit,
        theta_true=theta,
        background=np.array(_BACKGROUNDS[seed % len(_BACKGROUNDS)]),
        skin_mask=skin,
        nose_pattern=(0.08 * np.sin(np.sqrt(surf[..., 0] ** 2 + (surf[..., 1] - 0.02) ** 2) * 55.0)
                      * (np.sqrt(surf[..., 0] ** 2 + (surf[..., 1] - 0.02) ** 2) < 0.15) * deep
                      if nose_detail else None),
    )


def _hair_band(cov: np.ndarray, height: int, width: int) -> np.ndarray:
    ys, xs = np.nonzero(cov)
    cy, cx = ys.mean(), xs.mean()
    ry = (ys.max() - ys.min()) / 2.0
    rx = (xs.max() - xs.min()) / 2.0
    gy, gx = np.mgrid[:height, :width]
    rad = ((gy - cy) / (ry * 1.25)) ** 2 + ((gx - cx) / (rx * 1.18)) ** 2
    return (rad <= 1.0) & ~cov & (gy < cy - 0.15 * ry)


def sample_portraits(model: MorphableModel, count: int = 5) -> list[Portrait]:
    """The shipped photo-like fixtures: varied pose, lighting, and texture."""
    return [make_portrait(model, seed=s) for s in range(count)]
