"""Morphable face model: linear mesh basis plus a GMM prior on coefficients.

Coordinate conventions used throughout the package:

* model/camera space is right-handed, x right, y up, z toward the viewer;
* image space is x right (column), y down (row), origin at the top-left,
  pixel centers at integer coordinates.

The model file carries the mean mesh, identity and expression bases,
triangle topology, landmark vertex order, the coefficient prior, and the
nine named vertex groups used for region-wise detail transfer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

REGION_NAMES = (
    "left_eyebrow",
    "right_eyebrow",
    "left_eye",
    "right_eye",
    "forehead",
    "nose",
    "mouth",
    "left_cheek",
    "right_cheek",
)


@dataclass
class GmmPrior:
    """Diagonal-covariance Gaussian mixture over (identity, expression) coefficients."""

    weights: np.ndarray       # (C,)
    means: np.ndarray         # (C, Ki+Ke)
    covariances: np.ndarray   # (C, Ki+Ke) diagonal entries
    scale: float = 1.0        # regularizer weight

    def validate(self) -> None:
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValueError("prior weights must sum to 1")
        if np.any(self.covariances <= 0):
            raise ValueError("prior covariances must be positive")

    def density(self, params: np.ndarray) -> float:
        """Mixture probability density at ``params``."""
        params = np.asarray(params, dtype=float)
        d = self.means.shape[1]
        if params.shape != (d,):
            raise ValueError(f"expected {d} parameters, got {params.shape}")
        diff = params[None, :] - self.means
        quad = np.sum(diff * diff / self.covariances, axis=1)
        log_norm = -0.5 * (d * np.log(2.0 * np.pi) + np.sum(np.log(self.covariances), axis=1))
        return float(np.sum(self.weights * np.exp(log_norm - 0.5 * quad)))


@dataclass
class MorphableModel:
    mean_mesh: np.ndarray          # (V, 3)
    identity_basis: np.ndarray     # (3V, Ki)
    expression_basis: np.ndarray   # (3V, Ke)
    triangles: np.ndarray          # (T, 3) uint32
    landmark_indices: np.ndarray   # (L,) uint32
    prior: GmmPrior
    region_groups: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return self.mean_mesh.shape[0]

    @property
    def n_identity(self) -> int:
        return self.identity_basis.shape[1]

    @property
    def n_expression(self) -> int:
        return self.expression_basis.shape[1]

    def validate(self) -> None:
        v = self.n_vertices
        if self.identity_basis.shape[0] != 3 * v or self.expression_basis.shape[0] != 3 * v:
            raise ValueError("basis row count must equal 3 * vertex count")
        if self.triangles.size and self.triangles.max() >= v:
            raise ValueError("triangle index out of range")
        if self.landmark_indices.size and self.landmark_indices.max() >= v:
            raise ValueError("landmark index out of range")
        for name, ids in self.region_groups.items():
            if ids.size and ids.max() >= v:
                raise ValueError(f"region {name!r} vertex index out of range")
        self.prior.validate()


def build_mesh(model: MorphableModel, omega_i: np.ndarray, omega_e: np.ndarray) -> np.ndarray:
    """Evaluate the linear model: mean + identity and expression offsets, as (V, 3)."""
    omega_i = np.asarray(omega_i, dtype=float)
    omega_e = np.asarray(omega_e, dtype=float)
    if omega_i.shape != (model.n_identity,):
        raise ValueError(f"expected {model.n_identity} identity coefficients, got {omega_i.shape}")
    if omega_e.shape != (model.n_expression,):
        raise ValueError(f"expected {model.n_expression} expression coefficients, got {omega_e.shape}")
    flat = model.mean_mesh.reshape(-1) + model.identity_basis @ omega_i + model.expression_basis @ omega_e
    return flat.reshape(-1, 3)


def vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals (cross products carry the area weight)."""
    tri = vertices[triangles]
    face_n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    normals = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(normals, triangles[:, k], face_n)
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    return normals / norm


# ---------------------------------------------------------------------------
# Procedural sample model: an elliptical face-like cap with 8 identity and
# 4 expression modes. It stands in for a scanned basis, which loads from the
# same file format (see faceedit.bundle).
# ---------------------------------------------------------------------------

_CAP_RHO = 0.9   # radial extent of the cap; keeps silhouette normals bounded
_CAP_DEPTH = 0.8


def _cap_height(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Height field of the face surface over the (x, y) disk (z toward viewer).

    Feature bumps are kept gentle: shading curvature scales with them, and
    soft-tissue smoothing of the rendered shading must stay a small effect.
    """
    r2 = x * x + (y / 1.15) ** 2
    base = _CAP_DEPTH * np.sqrt(np.maximum(0.0, 1.0 - r2))
    nose = 0.08 * np.exp(-((x / 0.20) ** 2 + (y / 0.30) ** 2))
    brow = 0.03 * np.exp(-(((y - 0.38) / 0.14) ** 2)) * np.exp(-((x / 0.60) ** 2))
    socket = -0.035 * (
        np.exp(-(((x - 0.33) / 0.17) ** 2 + ((y - 0.22) / 0.14) ** 2))
        + np.exp(-(((x + 0.33) / 0.17) ** 2 + ((y - 0.22) / 0.14) ** 2))
    )
    lips = 0.025 * np.exp(-((x / 0.28) ** 2 + ((y + 0.42) / 0.10) ** 2))
    return base + nose + brow + socket + lips


def _bump(x, y, cx, cy, sx, sy):
    return np.exp(-(((x - cx) / sx) ** 2 + ((y - cy) / sy) ** 2))


def make_sample_model(n_rings: int = 20, n_theta: int = 36, prior_scale: float = 1.0) -> MorphableModel:
    """Build the shipped synthetic face model deterministically."""
    # Polar grid over the cap: center vertex + rings.
    xs = [0.0]
    ys = [0.0]
    for i in range(1, n_rings + 1):
        r = _CAP_RHO * i / n_rings
        ang = 2.0 * np.pi * np.arange(n_theta) / n_theta
        xs.extend(r * np.cos(ang))
        ys.extend(1.15 * r * np.sin(ang))
    x = np.array(xs)
    y = np.array(ys)
    z = _cap_height(x, y)
    mean = np.stack([x, y, z], axis=1)
    v = mean.shape[0]

    # Triangulation: fan around the center, quads between rings. CCW seen from +z.
    tris = []
    for j in range(n_theta):
        tris.append((0, 1 + j, 1 + (j + 1) % n_theta))
    for i in range(1, n_rings):
        a0 = 1 + (i - 1) * n_theta
        b0 = 1 + i * n_theta
        for j in range(n_theta):
            j1 = (j + 1) % n_theta
            tris.append((a0 + j, b0 + j, b0 + j1))
            tris.append((a0 + j, b0 + j1, a0 + j1))
    triangles = np.array(tris, dtype=np.uint32)

    # Deformation modes. Every mode moves landmark vertices in x/y so that all
    # coefficients stay observable under an orthographic camera.
    def mode(dx, dy, dz):
        return np.stack([dx, dy, dz], axis=1).reshape(-1)

    zero = np.zeros(v)
    r2 = x * x + y * y
    # No mode may resemble a similarity transform (uniform scale, in-plane
    # rotation, translation), or it becomes indistinguishable from pose.
    identity_modes = [
        mode(0.12 * x * (1.0 - 0.9 * y * y), -0.04 * x * x * np.sign(y), zero),   # jaw/temple width
        mode(-0.03 * x * y, 0.12 * y * (1.0 - 0.8 * x * x), zero),                # face length taper
        mode(0.07 * np.sign(x) * _bump(np.abs(x), y, 0.10, -0.12, 0.10, 0.12),
             0.03 * _bump(x, y, 0, 0.1, 0.2, 0.3),
             0.12 * _bump(x, y, 0, 0, 0.18, 0.28)),                               # nose width/height
        mode(0.08 * np.sign(x) * _bump(np.abs(x), y, 0.55, -0.05, 0.2, 0.3),
             -0.04 * _bump(np.abs(x), y, 0.55, -0.05, 0.2, 0.3),
             0.08 * (_bump(x, y, 0.55, -0.05, 0.2, 0.3) + _bump(x, y, -0.55, -0.05, 0.2, 0.3))),  # cheekbones
        mode(0.04 * x * _bump(x, y, 0, 0.42, 0.6, 0.2),
             0.06 * _bump(x, y, 0, 0.45, 0.5, 0.15),
             0.08 * _bump(x, y, 0, 0.42, 0.5, 0.12)),                             # brow ridge
        mode(0.05 * x * _bump(x, y, 0, -0.75, 0.4, 0.3),
             -0.09 * _bump(x, y, 0, -0.75, 0.3, 0.25),
             0.06 * _bump(x, y, 0, -0.78, 0.28, 0.2)),                            # chin
        mode(0.06 * x * r2, 0.06 * y * r2, 0.10 * (1.0 - r2 / (_CAP_RHO**2 * 1.4))),  # rim flare + depth
        mode(0.06 * y * y - 0.02, -0.06 * x * x + 0.02, zero),                    # quadratic skew
    ]
    expression_modes = [
        mode(zero, -0.10 * _bump(x, y, 0, -0.45, 0.3, 0.18),
             -0.04 * _bump(x, y, 0, -0.5, 0.3, 0.2)),                 # jaw drop
        mode(0.05 * np.sign(x) * _bump(np.abs(x), y, 0.28, -0.42, 0.12, 0.1),
             0.06 * _bump(np.abs(x), y, 0.28, -0.42, 0.12, 0.1),
             zero),                                                   # smile corners
        mode(zero, 0.06 * _bump(x, y, 0, 0.4, 0.5, 0.15),
             0.03 * _bump(x, y, 0, 0.4, 0.5, 0.15)),                  # brow raise
        mode(0.02 * x * _bump(x, y, 0, 0.22, 0.5, 0.12),
             -0.05 * _bump(x, y, 0, 0.22, 0.5, 0.12),
             -0.04 * _bump(x, y, 0, 0.22, 0.5, 0.12)),                # squint
    ]
    identity_basis = np.stack(identity_modes, axis=1)
    expression_basis = np.stack(expression_modes, axis=1)

    landmark_indices = _pick_landmarks(mean)
    region_groups = _pick_regions(mean)

    k = identity_basis.shape[1] + expression_basis.shape[1]
    prior = GmmPrior(
        weights=np.array([0.6, 0.4]),
        means=np.vstack([np.zeros(k), 0.25 * np.ones(k)]),
        covariances=np.vstack([np.full(k, 0.25), np.full(k, 0.36)]),
        scale=prior_scale,
    )
    model = MorphableModel(
        mean_mesh=mean,
        identity_basis=identity_basis,
        expression_basis=expression_basis,
        triangles=triangles,
        landmark_indices=landmark_indices,
        prior=prior,
        region_groups=region_groups,
    )
    model.validate()
    return model


def _pick_landmarks(mean: np.ndarray) -> np.ndarray:
    """68 landmark vertices: nearest mesh vertices to a canonical template layout."""
    targets = []
    # jaw line: 17 points along the lower cap boundary
    for t in np.linspace(-0.95 * np.pi, -0.05 * np.pi, 17):
        targets.append((0.88 * np.cos(t + np.pi / 2), 1.0 * np.sin(t + np.pi / 2)))
    # eyebrows: 2 x 5
    for sx in (-1, 1):
        for t in np.linspace(-0.2, 0.2, 5):
            targets.append((sx * (0.35 + t), 0.40 - 2.0 * t * t))
    # nose bridge + base: 4 + 5
    for yy in np.linspace(0.25, -0.02, 4):
        targets.append((0.0, yy))
    for xx in np.linspace(-0.12, 0.12, 5):
        targets.append((xx, -0.12))
    # eyes: 2 x 6
    for sx in (-1, 1):
        for t in np.linspace(0, 2 * np.pi, 6, endpoint=False):
            targets.append((sx * 0.33 + 0.10 * np.cos(t), 0.22 + 0.05 * np.sin(t)))
    # mouth: outer 12 + inner 8
    for t in np.linspace(0, 2 * np.pi, 12, endpoint=False):
        targets.append((0.22 * np.cos(t), -0.42 + 0.09 * np.sin(t)))
    for t in np.linspace(0, 2 * np.pi, 8, endpoint=False):
        targets.append((0.13 * np.cos(t), -0.42 + 0.04 * np.sin(t)))

    xy = mean[:, :2]
    picked: list[int] = []
    for tx, ty in targets:
        d2 = (xy[:, 0] - tx) ** 2 + (xy[:, 1] - ty) ** 2
        order = np.argsort(d2, kind="stable")
        idx = next(int(i) for i in order if int(i) not in picked)
        picked.append(idx)
    return np.array(picked, dtype=np.uint32)


def _pick_regions(mean: np.ndarray) -> dict[str, np.ndarray]:
    """Assign vertices to the nine standard component groups (disjoint)."""
    x, y = mean[:, 0], mean[:, 1]
    labels = np.zeros(mean.shape[0], dtype=np.int32)  # 0 = unassigned

    def assign(name_idx, cond):
        sel = cond & (labels == 0)
        labels[sel] = name_idx

    # image-left = viewer's left (negative x in model space)
    assign(1, (x < -0.18) & (y > 0.33) & (y < 0.52))          # left_eyebrow
    assign(2, (x > 0.18) & (y > 0.33) & (y < 0.52))           # right_eyebrow
    assign(3, ((x + 0.33) ** 2 / 0.18**2 + (y - 0.22) ** 2 / 0.12**2) < 1)  # left_eye
    assign(4, ((x - 0.33) ** 2 / 0.18**2 + (y - 0.22) ** 2 / 0.12**2) < 1)  # right_eye
    assign(5, y >= 0.50)                                       # forehead
    assign(6, (np.abs(x) < 0.17) & (y > -0.22) & (y < 0.33))   # nose
    assign(7, (np.abs(x) < 0.34) & (y > -0.60) & (y <= -0.22))  # mouth
    assign(8, x <= -0.17)                                      # left_cheek
    assign(9, x >= 0.17)                                       # right_cheek

    groups = {}
    for i, name in enumerate(REGION_NAMES, start=1):
        groups[name] = np.flatnonzero(labels == i).astype(np.uint32)
    return groups
