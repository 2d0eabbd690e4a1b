"""Z-buffered software rasterization and cross-image pixel correspondence.

The depth buffer stores ``scale * z_camera`` (pixel units, larger = closer to
the viewer), so a covered pixel's 3D position in the shared light/camera
frame is simply ``(u, -v, depth)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..imops import sample_bilinear
from .fitting import FaceFit
from .model import MorphableModel, build_mesh, vertex_normals


@dataclass
class GeometryBuffers:
    normal_map: np.ndarray     # (H, W, 3) float32, unit where covered
    depth_map: np.ndarray      # (H, W) float32, scale * z_cam
    coverage_mask: np.ndarray  # (H, W) bool
    triangle_map: np.ndarray   # (H, W) int32, -1 where uncovered
    bary_map: np.ndarray       # (H, W, 3) float32 barycentric weights

    @property
    def shape(self) -> tuple[int, int]:
        return self.coverage_mask.shape

    def camera_points(self) -> np.ndarray:
        """(H, W, 3) positions in the pixel-unit camera frame (x=col, y=-row, z=depth)."""
        h, w = self.shape
        cols, rows = np.meshgrid(np.arange(w, dtype=np.float32), np.arange(h, dtype=np.float32))
        return np.stack([cols, -rows, self.depth_map], axis=-1)


@dataclass
class WarpField:
    """Per-pixel positions in another image, plus validity."""

    map_x: np.ndarray  # (H, W) float32
    map_y: np.ndarray  # (H, W) float32
    valid: np.ndarray  # (H, W) bool
    refinement_failed: bool = False

    @classmethod
    def identity(cls, height: int, width: int) -> "WarpField":
        cols, rows = np.meshgrid(np.arange(width, dtype=np.float32), np.arange(height, dtype=np.float32))
        return cls(cols, rows, np.ones((height, width), dtype=bool))

    def sample(self, img: np.ndarray, fill: float = 0.0) -> np.ndarray:
        return sample_bilinear(img, self.map_x, self.map_y, fill=fill)


def rasterize(fit: FaceFit, model: MorphableModel, width: int, height: int) -> GeometryBuffers:
    """Rasterize the fitted mesh into per-pixel normal/depth/barycentric buffers."""
    if width <= 0 or height <= 0:
        raise ValueError("raster dimensions must be positive")
    verts = build_mesh(model, fit.omega_i, fit.omega_e)
    cam = fit.camera_points(verts)
    uv = fit.project(verts)
    depth = (fit.scale * cam[:, 2]).astype(np.float64)
    vnorm = vertex_normals(verts, model.triangles) @ fit.rotation.T

    depth_buf = np.full((height, width), -np.inf, dtype=np.float64)
    tri_buf = np.full((height, width), -1, dtype=np.int32)
    bary_buf = np.zeros((height, width, 3), dtype=np.float64)

    tri_cam = cam[model.triangles]
    face_n = np.cross(tri_cam[:, 1] - tri_cam[:, 0], tri_cam[:, 2] - tri_cam[:, 0])
    front = face_n[:, 2] > 0

    for tid in np.flatnonzero(front):
        i0, i1, i2 = model.triangles[tid]
        p0, p1, p2 = uv[i0], uv[i1], uv[i2]
        xmin = max(int(np.ceil(min(p0[0], p1[0], p2[0]))), 0)
        xmax = min(int(np.floor(max(p0[0], p1[0], p2[0]))), width - 1)
        ymin = max(int(np.ceil(min(p0[1], p1[1], p2[1]))), 0)
        ymax = min(int(np.floor(max(p0[1], p1[1], p2[1]))), height - 1)
        if xmin > xmax or ymin > ymax:
            continue
        denom = (p1[1] - p2[1]) * (p0[0] - p2[0]) + (p2[0] - p1[0]) * (p0[1] - p2[1])
        if abs(denom) < 1e-12:
            continue
        xs, ys = np.meshgrid(np.arange(xmin, xmax + 1), np.arange(ymin, ymax + 1))
        w0 = ((p1[1] - p2[1]) * (xs - p2[0]) + (p2[0] - p1[0]) * (ys - p2[1])) / denom
        w1 = ((p2[1] - p0[1]) * (xs - p2[0]) + (p0[0] - p2[0]) * (ys - p2[1])) / denom
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        z = w0 * depth[i0] + w1 * depth[i1] + w2 * depth[i2]
        sub_d = depth_buf[ymin:ymax + 1, xmin:xmax + 1]
        sub_t = tri_buf[ymin:ymax + 1, xmin:xmax + 1]
        # ties on depth go to the smaller triangle id, so triangle order never matters
        win = inside & ((z > sub_d) | ((z == sub_d) & (tid < sub_t)))
        if not win.any():
            continue
        sub_d[win] = z[win]
        sub_t[win] = tid
        sub_b = bary_buf[ymin:ymax + 1, xmin:xmax + 1]
        sub_b[win] = np.stack([w0[win], w1[win], w2[win]], axis=-1)

    coverage = tri_buf >= 0
    normal_map = np.zeros((height, width, 3), dtype=np.float64)
    if coverage.any():
        ids = tri_buf[coverage]
        w = bary_buf[coverage]
        tri_vn = vnorm[model.triangles[ids]]          # (N, 3 verts, 3)
        n = np.einsum("nk,nkc->nc", w, tri_vn)
        n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-12)
        normal_map[coverage] = n

    depth_out = np.where(coverage, depth_buf, 0.0)
    return GeometryBuffers(
        normal_map=normal_map.astype(np.float32),
        depth_map=depth_out.astype(np.float32),
        coverage_mask=coverage,
        triangle_map=tri_buf,
        bary_map=bary_buf.astype(np.float32),
    )


def pixel_correspondence(
    fit_a: FaceFit,
    fit_b: FaceFit,
    model: MorphableModel,
    buffers_a: GeometryBuffers,
    buffers_b: GeometryBuffers,
) -> WarpField:
    """Map each covered pixel of image A through the shared mesh into image B."""
    h, w = buffers_a.shape
    map_x = np.zeros((h, w), dtype=np.float32)
    map_y = np.zeros((h, w), dtype=np.float32)
    valid = np.zeros((h, w), dtype=bool)

    cov = buffers_a.coverage_mask
    if cov.any():
        tids = buffers_a.triangle_map[cov]
        bary = buffers_a.bary_map[cov].astype(np.float64)
        verts_b = build_mesh(model, fit_b.omega_i, fit_b.omega_e)
        tri_pts = verts_b[model.triangles[tids]]            # (N, 3, 3)
        pts = np.einsum("nk,nkc->nc", bary, tri_pts)
        uv = fit_b.project(pts)
        map_x[cov] = uv[:, 0]
        map_y[cov] = uv[:, 1]
        hb, wb = buffers_b.shape
        xi = np.rint(uv[:, 0]).astype(np.int64)
        yi = np.rint(uv[:, 1]).astype(np.int64)
        inb = (xi >= 0) & (xi < wb) & (yi >= 0) & (yi < hb)
        ok = np.zeros(len(xi), dtype=bool)
        ok[inb] = buffers_b.coverage_mask[yi[inb], xi[inb]]
        valid[cov] = ok
    return WarpField(map_x, map_y, valid)


def compose_warp(base: WarpField, flow_u: np.ndarray, flow_v: np.ndarray) -> WarpField:
    """Evaluate ``base`` at positions displaced by a flow field (in output pixels)."""
    h, w = base.valid.shape
    cols, rows = np.meshgrid(np.arange(w, dtype=np.float32), np.arange(h, dtype=np.float32))
    xs = cols + flow_u
    ys = rows + flow_v
    map_x = sample_bilinear(base.map_x, xs, ys).astype(np.float32)
    map_y = sample_bilinear(base.map_y, xs, ys).astype(np.float32)
    val = sample_bilinear(base.valid.astype(np.float32), xs, ys) > 0.5
    inb = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    return WarpField(map_x, map_y, val & inb)
