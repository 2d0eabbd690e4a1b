"""Landmark-based model fitting with a scaled-orthographic camera.

Projection of a model point X: ``u = s*(R@X)[0] + tx``, ``v = -s*(R@X)[1] + ty``
(the sign flip maps the y-up camera frame onto y-down image rows).

The fit alternates a closed-form similarity pose estimate with damped
Gauss-Newton steps on the morph coefficients; the coefficient prior is the
scaled negative density of a Gaussian mixture fitted over plausible
parameters, so high-density coefficient vectors are rewarded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import Config, DEFAULT_CONFIG
from .model import GmmPrior, MorphableModel, build_mesh


@dataclass
class FaceFit:
    omega_i: np.ndarray
    omega_e: np.ndarray
    rotation: np.ndarray      # (3, 3) orthonormal
    translation: np.ndarray   # (2,) image-space offset (tx, ty)
    scale: float              # pixels per model unit
    residual: float = np.inf
    ill_conditioned: bool = False
    trace: list = field(default_factory=list)  # objective per outer iteration

    @property
    def omega(self) -> np.ndarray:
        return np.concatenate([self.omega_i, self.omega_e])

    def project(self, points: np.ndarray) -> np.ndarray:
        """Project (N, 3) model points to (N, 2) image coordinates."""
        cam = points @ self.rotation.T
        uv = np.empty((points.shape[0], 2))
        uv[:, 0] = self.scale * cam[:, 0] + self.translation[0]
        uv[:, 1] = -self.scale * cam[:, 1] + self.translation[1]
        return uv

    def camera_points(self, points: np.ndarray) -> np.ndarray:
        """Rotate model points into the camera frame (x right, y up, z toward viewer)."""
        return points @ self.rotation.T


def gmm_regularizer(params: np.ndarray, prior: GmmPrior) -> float:
    """Scaled negative mixture density; more negative at higher density."""
    return prior.scale * (-prior.density(params))


def _prior_grad_hess(params: np.ndarray, prior: GmmPrior) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and a PSD curvature surrogate of the regularizer."""
    d = prior.means.shape[1]
    diff = params[None, :] - prior.means
    quad = np.sum(diff * diff / prior.covariances, axis=1)
    log_norm = -0.5 * (d * np.log(2.0 * np.pi) + np.sum(np.log(prior.covariances), axis=1))
    comp = prior.weights * np.exp(log_norm - 0.5 * quad)   # (C,)
    value = prior.scale * (-float(comp.sum()))
    grad = prior.scale * np.sum(comp[:, None] * diff / prior.covariances, axis=0)
    hess = prior.scale * np.diag(np.sum(comp[:, None] / prior.covariances, axis=0))
    return value, grad, hess


def estimate_pose(model_points: np.ndarray, image_points: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Closed-form similarity alignment of 3D points to 2D observations.

    Returns (rotation, translation, scale) minimizing the reprojection error
    for the scaled-orthographic camera.
    """
    xc = model_points.mean(axis=0)
    lc = image_points.mean(axis=0)
    xt = model_points - xc
    lt = image_points - lc
    # Least-squares 2x3 map M with [u; v] = M @ X + t, then snap M to s*[r1; -r2].
    h = xt.T @ xt
    m = np.linalg.solve(h + 1e-12 * np.eye(3), xt.T @ lt).T  # (2, 3)
    a = np.vstack([m[0], -m[1]])                             # = s * [r1; r2]
    u, sv, vt = np.linalg.svd(a, full_matrices=True)
    r2rows = u @ vt[:2, :]
    scale = float(sv.mean())
    r3 = np.cross(r2rows[0], r2rows[1])
    rotation = np.vstack([r2rows, r3])
    proj = np.vstack([scale * r2rows[0], -scale * r2rows[1]])
    translation = lc - proj @ xc
    return rotation, translation, scale


def _project_out_pose(jac: np.ndarray, points: np.ndarray, fit: FaceFit) -> np.ndarray:
    """Remove from ``jac`` the residual directions reachable by pose changes."""
    n = points.shape[0]
    y = fit.camera_points(points)  # (N, 3)
    jp = np.zeros((2 * n, 6))
    jp[0::2, 0] = 1.0  # tx
    jp[1::2, 1] = 1.0  # ty
    jp[0::2, 2] = y[:, 0]   # d/d(scale), u rows
    jp[1::2, 2] = -y[:, 1]  # d/d(scale), v rows
    gen = np.array([
        [[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]],
        [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
    ])
    for j in range(3):
        d = y @ gen[j].T
        jp[0::2, 3 + j] = fit.scale * d[:, 0]
        jp[1::2, 3 + j] = -fit.scale * d[:, 1]
    q, _ = np.linalg.qr(jp)
    return jac - q @ (q.T @ jac)


def _objective(model: MorphableModel, fit: FaceFit, landmarks: np.ndarray) -> float:
    verts = build_mesh(model, fit.omega_i, fit.omega_e)
    proj = fit.project(verts[model.landmark_indices])
    data = float(np.sum((proj - landmarks) ** 2))
    return data + gmm_regularizer(fit.omega, model.prior)


def fit_face(
    landmarks: np.ndarray,
    model: MorphableModel,
    init: FaceFit | None = None,
    config: Config = DEFAULT_CONFIG,
) -> FaceFit:
    """Recover pose and morph coefficients from 2D landmarks."""
    landmarks = np.asarray(landmarks, dtype=float)
    n_lm = len(model.landmark_indices)
    if landmarks.shape != (n_lm, 2):
        raise ValueError(f"expected {n_lm} landmarks, got {landmarks.shape}")
    if n_lm < 6:
        raise ValueError("need at least 6 landmarks")

    centered = landmarks - landmarks.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    ill = sv[0] <= 0 or sv[1] / sv[0] < 1e-6

    ki, ke = model.n_identity, model.n_expression
    prior = GmmPrior(
        weights=model.prior.weights,
        means=model.prior.means,
        covariances=model.prior.covariances,
        scale=config.prior_scale,
    )
    work = MorphableModel(
        mean_mesh=model.mean_mesh,
        identity_basis=model.identity_basis,
        expression_basis=model.expression_basis,
        triangles=model.triangles,
        landmark_indices=model.landmark_indices,
        prior=prior,
        region_groups=model.region_groups,
    )

    if init is not None:
        fit = FaceFit(
            omega_i=np.array(init.omega_i, dtype=float),
            omega_e=np.array(init.omega_e, dtype=float),
            rotation=np.array(init.rotation, dtype=float),
            translation=np.array(init.translation, dtype=float),
            scale=float(init.scale),
        )
    else:
        fit = FaceFit(
            omega_i=np.zeros(ki),
            omega_e=np.zeros(ke),
            rotation=np.eye(3),
            translation=np.zeros(2),
            scale=1.0,
        )

    # Landmark rows of the combined basis: (L, 3, Ki+Ke)
    basis = np.concatenate([work.identity_basis, work.expression_basis], axis=1)
    lm = work.landmark_indices
    lm_basis = basis.reshape(-1, 3, ki + ke)[lm]
    lm_mean = work.mean_mesh[lm]

    def repose(omega: np.ndarray) -> FaceFit:
        """Closed-form optimal pose for the given coefficients."""
        pts = lm_mean + lm_basis @ omega
        rot, trans, scale = estimate_pose(pts, landmarks)
        return FaceFit(omega[:ki], omega[ki:], rot, trans, scale)

    damping = config.fit_damping_init
    fit = repose(fit.omega) if init is None else fit
    prev = _objective(work, fit, landmarks)
    trace = [prev]

    for _ in range(config.fit_max_iters):
        # Pose: closed-form alignment of the current landmark vertices
        # (always a descent step on the data term; prior is pose-free).
        cand = repose(fit.omega)
        if _objective(work, cand, landmarks) <= prev:
            fit = cand

        if not config.average_face:
            # Coefficients: damped Gauss-Newton on the pose-reduced objective.
            # The coefficient Jacobian is projected onto the complement of the
            # pose Jacobian (variable projection), since the pose is re-solved
            # in closed form for every trial step.
            p = fit.scale * np.vstack([fit.rotation[0], -fit.rotation[1]])  # (2, 3)
            jac = np.einsum("ij,ljk->lik", p, lm_basis).reshape(-1, ki + ke)
            pts = lm_mean + lm_basis @ fit.omega
            res = (fit.project(pts) - landmarks).reshape(-1)
            jac = _project_out_pose(jac, pts, fit)
            _, pg, ph = _prior_grad_hess(fit.omega, prior)
            grad = 2.0 * jac.T @ res + pg
            hess = 2.0 * jac.T @ jac + ph

            cur = _objective(work, fit, landmarks)
            for _ in range(30):
                step = np.linalg.solve(hess + damping * np.eye(ki + ke), -grad)
                trial_fit = repose(fit.omega + step)
                if _objective(work, trial_fit, landmarks) < cur:
                    fit = trial_fit
                    damping = max(damping / 10.0, 1e-12)
                    break
                damping *= 10.0

        obj = _objective(work, fit, landmarks)
        trace.append(obj)
        if prev - obj <= config.fit_rel_tol * abs(prev):
            prev = min(prev, obj)
            break
        prev = obj

    fit.residual = prev
    fit.ill_conditioned = bool(ill)
    fit.trace = trace
    return fit
