import time

import numpy as np
import pytest

from faceedit.segmentation import matting_laplacian, matting_refine


def test_laplacian_row_sums_vanish():
    rng = np.random.default_rng(3)
    img = rng.uniform(size=(10, 10, 3))
    lap = matting_laplacian(img)
    row_sums = np.asarray(lap.sum(axis=1)).ravel()
    assert np.abs(row_sums).max() < 1e-9


def test_laplacian_positive_semidefinite():
    rng = np.random.default_rng(4)
    img = rng.uniform(size=(10, 10, 3))
    lap = matting_laplacian(img)
    for _ in range(20):
        x = rng.normal(size=lap.shape[0])
        assert x @ (lap @ x) >= -1e-9


def test_matting_monotone_transition_on_constant_image():
    h, w = 20, 40
    img = np.full((h, w, 3), 0.5)
    trimap = np.full((h, w), 0.5)
    trimap[:, :10] = 1.0
    trimap[:, 30:] = 0.0
    alpha = matting_refine(img, trimap)
    np.testing.assert_array_equal(alpha[:, :10], 1.0)
    np.testing.assert_array_equal(alpha[:, 30:], 0.0)
    for row in range(h):
        diffs = np.diff(alpha[row, 8:32])
        assert np.all(diffs <= 1e-6)


def test_matting_fully_constrained_reproduces_trimap():
    rng = np.random.default_rng(5)
    img = rng.uniform(size=(12, 12, 3))
    trimap = (rng.uniform(size=(12, 12)) > 0.5).astype(float)
    alpha = matting_refine(img, trimap)
    np.testing.assert_array_equal(alpha, trimap)


def test_matting_rejects_missing_constraints():
    img = np.full((8, 8, 3), 0.5)
    with pytest.raises(ValueError):
        matting_refine(img, np.full((8, 8), 0.5))
    with pytest.raises(ValueError):
        matting_refine(img, np.ones((8, 8)))  # no background constraint


def test_matting_constraint_values_exact():
    rng = np.random.default_rng(6)
    img = rng.uniform(size=(16, 16, 3))
    trimap = np.full((16, 16), 0.5)
    trimap[:4] = 1.0
    trimap[-4:] = 0.0
    alpha = matting_refine(img, trimap)
    assert (alpha[:4] == 1.0).all()
    assert (alpha[-4:] == 0.0).all()
    assert alpha.min() >= 0.0 and alpha.max() <= 1.0


def test_matting_64x64_under_two_seconds():
    rng = np.random.default_rng(7)
    img = rng.uniform(size=(64, 64, 3))
    trimap = np.full((64, 64), 0.5)
    trimap[:8] = 1.0
    trimap[-8:] = 0.0
    t0 = time.time()
    matting_refine(img, trimap)
    assert time.time() - t0 < 2.0
