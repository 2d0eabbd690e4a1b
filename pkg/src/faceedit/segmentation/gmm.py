"""Diagonal-covariance Gaussian mixtures fitted with EM.

Initialization is k-means++ over the unique sample rows with a fixed seed,
which makes the fit deterministic and invariant to duplicated samples. The
EM log-likelihood history is recorded and checked to be non-decreasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class PixelGmm:
    weights: np.ndarray       # (K,)
    means: np.ndarray         # (K, D)
    covariances: np.ndarray   # (K, D) diagonal entries
    ll_history: list = field(default_factory=list)

    def component_log_density(self, x: np.ndarray) -> np.ndarray:
        """(N, K) per-component log densities."""
        d = self.means.shape[1]
        diff = x[:, None, :] - self.means[None, :, :]
        quad = np.sum(diff * diff / self.covariances[None, :, :], axis=2)
        log_norm = -0.5 * (d * np.log(2 * np.pi) + np.sum(np.log(self.covariances), axis=1))
        return log_norm[None, :] - 0.5 * quad

    def log_likelihood(self, x: np.ndarray) -> np.ndarray:
        """(N,) mixture log density per sample."""
        lg = self.component_log_density(x) + np.log(self.weights)[None, :]
        m = lg.max(axis=1, keepdims=True)
        return (m + np.log(np.exp(lg - m).sum(axis=1, keepdims=True)))[:, 0]


def _kmeanspp_init(unique: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = unique.shape[0]
    centers = [unique[rng.integers(n)]]
    d2 = np.sum((unique - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers.append(unique[rng.integers(n)])
            continue
        probs = d2 / total
        centers.append(unique[rng.choice(n, p=probs)])
        d2 = np.minimum(d2, np.sum((unique - centers[-1]) ** 2, axis=1))
    return np.stack(centers)


def train_pixel_gmm(
    samples: np.ndarray,
    n_components: int = 3,
    cov_floor: float = 1e-6,
    max_iters: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
) -> PixelGmm:
    """EM fit of a diagonal GMM; requires at least 10 samples per component."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ValueError("samples must be (N, D)")
    n, d = samples.shape
    if n < 10 * n_components:
        raise ValueError(f"need at least {10 * n_components} samples, got {n}")

    unique = np.unique(samples, axis=0)
    k = min(n_components, unique.shape[0])
    rng = np.random.default_rng(seed)
    means = _kmeanspp_init(unique, k, rng)
    covariances = np.tile(np.maximum(samples.var(axis=0), cov_floor), (k, 1))
    weights = np.full(k, 1.0 / k)
    gmm = PixelGmm(weights, means, covariances)

    prev_ll = -np.inf
    for _ in range(max_iters):
        # E step
        lg = gmm.component_log_density(samples) + np.log(gmm.weights)[None, :]
        m = lg.max(axis=1, keepdims=True)
        log_prob = m[:, 0] + np.log(np.exp(lg - m).sum(axis=1))
        resp = np.exp(lg - log_prob[:, None])
        ll = float(log_prob.mean())
        if gmm.ll_history and ll < gmm.ll_history[-1] - 1e-9:
            raise AssertionError("EM log-likelihood decreased")
        gmm.ll_history.append(ll)
        if ll - prev_ll < tol * max(abs(prev_ll), 1.0) and prev_ll != -np.inf:
            break
        prev_ll = ll
        # M step
        nk = resp.sum(axis=0) + 1e-12
        gmm.weights = nk / nk.sum()
        gmm.means = (resp.T @ samples) / nk[:, None]
        diff2 = (samples[:, None, :] - gmm.means[None, :, :]) ** 2
        gmm.covariances = np.maximum(
            np.einsum("nk,nkd->kd", resp, diff2) / nk[:, None], cov_floor
        )
    return gmm
