"""Closed-form matting Laplacian and the constrained alpha solve.

The Laplacian is assembled from 3x3 windows with regularization ``eps``;
the alpha field solves ``(L + lam * D) a = lam * D * a_hat`` by conjugate
gradients, where D indicates constrained pixels and ``a_hat`` holds their
values. Constrained pixels are pinned to their trimap values exactly in the
returned matte.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse
import scipy.sparse.linalg
from numpy.lib.stride_tricks import as_strided

from ..config import Config, DEFAULT_CONFIG


def matting_laplacian(image: np.ndarray, eps: float = 1e-5) -> scipy.sparse.csr_matrix:
    """Sparse (H*W, H*W) matting Laplacian over 3x3 windows."""
    if image.ndim == 2:
        image = image[..., None].repeat(3, axis=2)
    h, w, d = image.shape
    if h < 3 or w < 3:
        raise ValueError("image must be at least 3x3")
    win = 9

    idx = np.arange(h * w).reshape(h, w)
    shape = (h - 2, w - 2, 3, 3)
    strides = (idx.strides[0], idx.strides[1]) + idx.strides
    win_idx = as_strided(idx, shape=shape, strides=strides).reshape(-1, win)

    pixels = image.reshape(-1, d)
    win_i = pixels[win_idx]                                  # (n, 9, d)
    mu = win_i.mean(axis=1, keepdims=True)
    centered = win_i - mu
    cov = np.einsum("nwd,nwe->nde", centered, centered) / win
    inv = np.linalg.inv(cov + (eps / win) * np.eye(d))
    quad = np.einsum("nwd,nde,nve->nwv", centered, inv, centered)
    vals = np.eye(win) - (1.0 + quad) / win

    rows = np.repeat(win_idx, win, axis=1).ravel()
    cols = np.tile(win_idx, (1, win)).ravel()
    lap = scipy.sparse.coo_matrix((vals.ravel(), (rows, cols)), shape=(h * w, h * w))
    return lap.tocsr()


def matting_refine(image: np.ndarray, trimap: np.ndarray, config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """Propagate trimap constraints into a [0, 1] alpha matte.

    Trimap values: 1 foreground, 0 background, 0.5 unknown.
    """
    h, w = trimap.shape
    is_fg = trimap >= 0.99
    is_bg = trimap <= 0.01
    constrained = is_fg | is_bg
    if not is_fg.any() or not is_bg.any():
        raise ValueError("trimap needs both foreground and background constraints")

    if constrained.all():
        return np.where(is_fg, 1.0, 0.0)

    lap = matting_laplacian(image, eps=config.matting_eps)
    lam = config.matting_lambda
    dvec = lam * constrained.reshape(-1).astype(np.float64)
    a_hat = np.where(is_fg, 1.0, 0.0).reshape(-1)
    system = lap + scipy.sparse.diags(dvec)
    rhs = dvec * a_hat
    precond = scipy.sparse.diags(1.0 / system.diagonal().clip(min=1e-12))
    alpha, info = scipy.sparse.linalg.cg(
        system, rhs, x0=a_hat, rtol=config.matting_cg_rtol, maxiter=2000, M=precond
    )
    if info != 0:
        raise RuntimeError(f"matting solve did not converge (info={info})")
    alpha = alpha.reshape(h, w)
    alpha[is_fg] = 1.0
    alpha[is_bg] = 0.0
    return np.clip(alpha, 0.0, 1.0)
