"""Spherical-harmonic lighting, the light rig, and the forward face renderer.

Real SH convention (pinned; any other convention silently changes fitted
coefficients): order-0 constant c0 = 0.282095 = 1/(2*sqrt(pi)) and order-1
constant c1 = 0.488603 = sqrt(3/(4*pi)), with the linear basis ordered
(1, x, y, z) on unit normals. First-order fitting uses 4 coefficients; a
9-coefficient order-2 basis exists for rig editing but is never fitted.

Light-space positions live in the pixel-unit camera frame of the geometry
buffers: x = image column, y = negative image row, z = depth (toward the
viewer). A directional light's ``direction`` points from the surface toward
the light; a spot's ``direction`` points from the light into the scene.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import minimum_filter

from .config import Config, DEFAULT_CONFIG
from .geometry.raster import GeometryBuffers

SH_C0 = 0.282095
SH_C1 = 0.488603
_SH_C2 = (1.092548, 1.092548, 0.315392, 1.092548, 0.546274)


class _Counter:
    def __init__(self) -> None:
        self.count = 0

    def bump(self, n: int = 1) -> None:
        self.count += n


normalization_warnings = _Counter()


def sh_basis(normal: np.ndarray, order2: bool = False) -> np.ndarray:
    """SH basis row(s) for unit normals; shape (..., 4) or (..., 9)."""
    n = np.asarray(normal, dtype=np.float64)
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    bad = np.abs(norm - 1.0) > 1e-4
    if bad.any():
        normalization_warnings.bump(int(bad.sum()))
        n = np.where(bad, n / np.maximum(norm, 1e-12), n)  # leave good rows untouched
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    cols = [np.full_like(x, SH_C0), SH_C1 * x, SH_C1 * y, SH_C1 * z]
    if order2:
        cols += [
            _SH_C2[0] * x * y,
            _SH_C2[1] * y * z,
            _SH_C2[2] * (3.0 * z * z - 1.0),
            _SH_C2[3] * x * z,
            _SH_C2[4] * (x * x - y * y),
        ]
    return np.stack(cols, axis=-1)


@dataclass
class ShFit:
    theta: np.ndarray          # (4,)
    residual: float
    rank_deficient: bool = False


def fit_sh(shading: np.ndarray, normals: np.ndarray, face_mask: np.ndarray) -> ShFit:
    """Least-squares first-order SH coefficients over the masked pixels."""
    mask = face_mask.astype(bool)
    if mask.sum() < 4:
        raise ValueError("need at least 4 face pixels to fit lighting")
    a = sh_basis(normals[mask])
    b = shading[mask].astype(np.float64)
    ata = a.T @ a
    sv = np.linalg.svd(ata, compute_uv=False)
    if sv[-1] < 1e-10 * sv[0]:
        theta = np.zeros(4)
        theta[0] = float(b.mean()) / SH_C0
        resid = float(np.sum((a @ theta - b) ** 2))
        return ShFit(theta=theta, residual=resid, rank_deficient=True)
    theta = np.linalg.solve(ata + 1e-8 * np.eye(4), a.T @ b)
    resid = float(np.sum((a @ theta - b) ** 2))
    return ShFit(theta=theta, residual=resid)


def sh_render(normals: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Per-pixel SH shading, clamped below at zero.

    ``theta`` of shape (4,)/(9,) gives one channel; (3, 4)/(3, 9) gives three.
    """
    theta = np.asarray(theta, dtype=np.float64)
    order2 = theta.shape[-1] == 9
    basis = sh_basis(normals, order2=order2)
    if theta.ndim == 1:
        return np.maximum(basis @ theta, 0.0)
    return np.maximum(np.einsum("...k,ck->...c", basis, theta), 0.0)


# ---------------------------------------------------------------------------
# Light rig
# ---------------------------------------------------------------------------

@dataclass
class DirectionalLight:
    direction: np.ndarray  # unit, surface -> light
    intensity: np.ndarray  # RGB >= 0


@dataclass
class SpotLight:
    position: np.ndarray
    direction: np.ndarray  # unit, light -> scene
    cone_angle: float      # radians, in (0, pi)
    intensity: np.ndarray  # RGB >= 0
    casts_shadow: bool = True


@dataclass
class LightRig:
    sh: np.ndarray                       # (4,), (9,), (3,4) or (3,9)
    directionals: list[DirectionalLight] = field(default_factory=list)
    spots: list[SpotLight] = field(default_factory=list)

    def validate(self) -> None:
        sh = np.asarray(self.sh, dtype=float)
        if sh.shape not in ((4,), (9,), (3, 4), (3, 9)):
            raise ValueError(f"sh coefficients must be 4 or 9 per channel, got shape {sh.shape}")
        if not np.all(np.isfinite(sh)):
            raise ValueError("sh coefficients must be finite")
        for d in self.directionals:
            if abs(np.linalg.norm(d.direction) - 1.0) > 1e-6:
                raise ValueError("directional light direction must be unit length")
            if np.any(np.asarray(d.intensity) < 0):
                raise ValueError("light intensity must be nonnegative")
        for s in self.spots:
            if abs(np.linalg.norm(s.direction) - 1.0) > 1e-6:
                raise ValueError("spot direction must be unit length")
            if not (0.0 < s.cone_angle < np.pi):
                raise ValueError("spot cone angle must be in (0, pi)")
            if np.any(np.asarray(s.intensity) < 0):
                raise ValueError("light intensity must be nonnegative")

    @classmethod
    def from_theta(cls, theta: np.ndarray) -> "LightRig":
        return cls(sh=np.array(theta, dtype=float))

    def to_dict(self) -> dict:
        return {
            "sh": np.asarray(self.sh, dtype=float).tolist(),
            "directionals": [
                {"direction": list(map(float, d.direction)), "intensity": list(map(float, d.intensity))}
                for d in self.directionals
            ],
            "spots": [
                {
                    "position": list(map(float, s.position)),
                    "direction": list(map(float, s.direction)),
                    "cone_angle": float(s.cone_angle),
                    "intensity": list(map(float, s.intensity)),
                    "casts_shadow": bool(s.casts_shadow),
                }
                for s in self.spots
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LightRig":
        rig = cls(
            sh=np.asarray(doc["sh"], dtype=float),
            directionals=[
                DirectionalLight(np.asarray(d["direction"], float), np.asarray(d["intensity"], float))
                for d in doc.get("directionals", [])
            ],
            spots=[
                SpotLight(
                    np.asarray(s["position"], float),
                    np.asarray(s["direction"], float),
                    float(s["cone_angle"]),
                    np.asarray(s["intensity"], float),
                    bool(s.get("casts_shadow", True)),
                )
                for s in doc.get("spots", [])
            ],
        )
        rig.validate()
        return rig


# ---------------------------------------------------------------------------
# Forward renderer
# ---------------------------------------------------------------------------

def _spot_frame(direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    up = np.array([0.0, 1.0, 0.0])
    if abs(float(direction @ up)) > 0.99:
        up = np.array([1.0, 0.0, 0.0])
    e1 = np.cross(direction, up)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(direction, e1)
    return e1, e2


def _shadow_visibility(
    spot: SpotLight,
    points: np.ndarray,     # (N, 3) covered scene points
    query: np.ndarray,      # (M, 3) points to test
    config: Config,
) -> np.ndarray:
    """3x3 percentage-closer visibility in [0, 1] from a splatted depth map."""
    size = config.shadow_map_size
    e1, e2 = _spot_frame(spot.direction)
    tan_cone = np.tan(min(spot.cone_angle, np.pi / 2 * 0.999))

    def light_coords(p):
        v = p - spot.position
        dist = np.linalg.norm(v, axis=-1)
        dirn = v / np.maximum(dist[..., None], 1e-12)
        z = dirn @ spot.direction
        u = (dirn @ e1) / np.maximum(z, 1e-6)
        w = (dirn @ e2) / np.maximum(z, 1e-6)
        px = (u / tan_cone * 0.5 + 0.5) * (size - 1)
        py = (w / tan_cone * 0.5 + 0.5) * (size - 1)
        return px, py, dist, z

    px, py, dist, z = light_coords(points)
    ok = (z > 0) & (px >= 0) & (px < size) & (py >= 0) & (py < size)
    depth_map = np.full((size, size), np.inf)
    xi = np.rint(px[ok]).astype(np.int64)
    yi = np.rint(py[ok]).astype(np.int64)
    d = dist[ok]
    np.minimum.at(depth_map, (yi, xi), d)
    # close point-sampling holes: one scene pixel covers ~K/axial texels, so
    # grow each splat to that footprint with a min filter
    if len(d):
        axial_min = float((dist[ok] * z[ok]).min())
        k = (size - 1) * 0.5 / tan_cone
        radius = int(np.clip(np.ceil(0.5 * k / max(axial_min, 1e-6)) + 1, 1, 32))
    else:
        radius = 1
    depth_map = minimum_filter(depth_map, size=2 * radius + 1, mode="nearest")

    qx, qy, qdist, qz = light_coords(query)
    rng = max(float(d.max() - d.min()), 1e-6) if len(d) else 1.0
    bias = config.shadow_bias_frac * rng * (1 + radius)
    vis = np.zeros(len(query))
    qxi = np.clip(np.rint(qx).astype(np.int64), 0, size - 1)
    qyi = np.clip(np.rint(qy).astype(np.int64), 0, size - 1)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            xs = np.clip(qxi + dx, 0, size - 1)
            ys = np.clip(qyi + dy, 0, size - 1)
            vis += (qdist <= depth_map[ys, xs] + bias).astype(float)
    vis /= 9.0
    vis[qz <= 0] = 0.0
    return vis


def _smoothstep(edge0: np.ndarray, edge1: np.ndarray, x: np.ndarray) -> np.ndarray:
    t = np.clip((x - edge0) / np.maximum(edge1 - edge0, 1e-12), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def shading_field(buffers: GeometryBuffers, rig: LightRig, config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """(H, W, 3) per-channel shading over covered pixels (zero elsewhere)."""
    rig.validate()
    h, w = buffers.shape
    cov = buffers.coverage_mask
    out = np.zeros((h, w, 3), dtype=np.float64)
    if not cov.any():
        return out
    normals = buffers.normal_map[cov].astype(np.float64)

    sh = np.asarray(rig.sh, dtype=np.float64)
    shaded = sh_render(normals, sh)
    if shaded.ndim == 1:
        shaded = np.repeat(shaded[:, None], 3, axis=1)
    acc = shaded

    points = None
    if rig.directionals or rig.spots:
        points = buffers.camera_points()[cov].astype(np.float64)

    for dl in rig.directionals:
        lam = np.maximum(normals @ dl.direction, 0.0)
        acc = acc + lam[:, None] * np.asarray(dl.intensity, float)[None, :]

    for sp in rig.spots:
        v = sp.position[None, :] - points
        dist = np.linalg.norm(v, axis=1)
        l = v / np.maximum(dist[:, None], 1e-12)
        lam = np.maximum(np.einsum("nc,nc->n", normals, l), 0.0)
        cos_axis = np.clip(-(l @ sp.direction), -1.0, 1.0)
        ang = np.arccos(cos_axis)
        inner = config.spot_inner_cone_frac * sp.cone_angle
        falloff = 1.0 - _smoothstep(inner, sp.cone_angle, ang)
        if sp.casts_shadow:
            vis = _shadow_visibility(sp, points, points, config)
        else:
            vis = 1.0
        acc = acc + (vis * falloff * lam)[:, None] * np.asarray(sp.intensity, float)[None, :]

    out[cov] = acc
    return out


def render_face(albedo: np.ndarray, buffers: GeometryBuffers, rig: LightRig,
                config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """Lambertian composite: albedo times per-channel shading."""
    if albedo.shape[:2] != buffers.shape:
        raise ValueError("albedo and buffers disagree on dimensions")
    return albedo * shading_field(buffers, rig, config)
