"""Face / hair / background labeling.

Seeds follow the mask geometry: conservative-mask pixels are face, pixels
outside the aggressive mask that the hair detector does not claim are
background, and hair-detector hits inside the normal mask are hair. A
per-image GMM is trained for each seeded label over color + texture
features and the remaining pixels take the most likely label. Seeds are
never relabeled; exact likelihood ties resolve face > hair > background.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import Config, DEFAULT_CONFIG
from .features import feature_stack
from .gmm import PixelGmm, train_pixel_gmm
from .masks import RegionMasks

BACKGROUND, HAIR, FACE = 0, 1, 2
LABEL_PIXEL_VALUES = {BACKGROUND: 0, HAIR: 128, FACE: 255}


@dataclass
class LabelMap:
    labels: np.ndarray      # (H, W) uint8 in {BACKGROUND, HAIR, FACE}
    confidence: np.ndarray  # (H, W) float in [0, 1]

    def face_mask(self) -> np.ndarray:
        return self.labels == FACE

    def hair_mask(self) -> np.ndarray:
        return self.labels == HAIR


def prepare_features(image: np.ndarray, textures: np.ndarray | None = None) -> np.ndarray:
    """Standardized color+texture stack shared by the hair detector and classifiers.

    Channels with (numerically) zero variance carry no information and are
    zeroed instead of amplifying float noise through the normalization.
    """
    features = feature_stack(image, textures)
    flat = features.reshape(-1, features.shape[-1])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    out = (features - mean) / np.maximum(std, 1e-6)
    out[..., std <= 1e-9] = 0.0
    return out


def _subsample(mask: np.ndarray, limit: int, seed: int) -> np.ndarray:
    idx = np.flatnonzero(mask.reshape(-1))
    if len(idx) > limit:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(idx, size=limit, replace=False))
    return idx


def hair_detector(
    image: np.ndarray,
    masks: RegionMasks,
    features: np.ndarray | None = None,
    config: Config = DEFAULT_CONFIG,
) -> PixelGmm | None:
    """Color GMM trained on pixels in the top stripe of the normal face mask.

    The detector works on the color channels alone: the wide-support texture
    responses carry a halo around the face boundary that would otherwise read
    as hair everywhere near the head. Returns None when the stripe holds too
    few pixels; downstream then treats the hair score as absent and produces
    no hair label.
    """
    if not masks.normal.any():
        raise ValueError("normal mask is empty")
    rows = np.flatnonzero(masks.normal.any(axis=1))
    r0, r1 = rows.min(), rows.max()
    strip_end = r0 + max(1, int(np.ceil(config.hair_strip_frac * (r1 - r0 + 1))))
    strip = np.zeros_like(masks.normal)
    strip[r0:strip_end] = masks.normal[r0:strip_end]
    if features is None:
        features = prepare_features(image)
    flat = features.reshape(-1, features.shape[-1])[:, :3]
    idx = _subsample(strip, config.seg_max_train_pixels, config.seg_train_seed)
    if len(idx) < 10 * config.seg_gmm_components:
        return None
    return train_pixel_gmm(
        flat[idx],
        n_components=config.seg_gmm_components,
        cov_floor=config.seg_gmm_cov_floor,
        max_iters=config.seg_gmm_max_iters,
        tol=config.seg_gmm_tol,
        seed=config.seg_train_seed,
    )


def segment(
    image: np.ndarray,
    masks: RegionMasks,
    hair: PixelGmm | None = None,
    features: np.ndarray | None = None,
    config: Config = DEFAULT_CONFIG,
) -> LabelMap:
    masks.validate()
    if features is None:
        features = prepare_features(image)
    h, w = image.shape[:2]
    flat = features.reshape(-1, features.shape[-1])

    def train(mask: np.ndarray, dims: int | None = None) -> PixelGmm | None:
        idx = _subsample(mask, config.seg_max_train_pixels, config.seg_train_seed)
        if len(idx) < 10 * config.seg_gmm_components:
            return None
        samples = flat[idx] if dims is None else flat[idx][:, :dims]
        return train_pixel_gmm(
            samples,
            n_components=config.seg_gmm_components,
            cov_floor=config.seg_gmm_cov_floor,
            max_iters=config.seg_gmm_max_iters,
            tol=config.seg_gmm_tol,
            seed=config.seg_train_seed,
        )

    face_model = train(masks.conservative)

    hair_hit = np.zeros((h, w), dtype=bool)
    if hair is not None:
        # hits are judged on color (matching the detector's feature space)
        color = flat[:, :3]
        face_color = train(masks.conservative, dims=3)
        if face_color is not None:
            # a hit must beat the face model decisively (ties and small
            # quibbles go to face / background)
            margin = config.hair_hit_margin
            hair_ll = hair.log_likelihood(color).reshape(h, w)
            hair_hit = hair_ll > face_color.log_likelihood(color).reshape(h, w) + margin
            # The stripe the detector trained on may include background pixels,
            # so a hit must also beat a provisional background model (fitted on
            # everything outside the head region, so local background shades
            # are represented) or the exterior would read as hair.
            bg_color = train(~masks.normal, dims=3)
            if bg_color is not None:
                hair_hit &= hair_ll > bg_color.log_likelihood(color).reshape(h, w) + margin

    face_seeds = masks.conservative
    hair_seeds = hair_hit & masks.normal & ~masks.conservative
    bg_seeds = ~masks.aggressive & ~hair_hit

    labels = np.full((h, w), -1, dtype=np.int16)
    labels[bg_seeds] = BACKGROUND
    labels[hair_seeds] = HAIR
    labels[face_seeds] = FACE  # face seeds win any overlap

    # priority order face > hair > background breaks exact likelihood ties
    candidates: list[tuple[int, PixelGmm]] = []
    for lab, mask in ((FACE, labels == FACE), (HAIR, labels == HAIR), (BACKGROUND, labels == BACKGROUND)):
        model = face_model if lab == FACE else train(mask)
        if model is not None and mask.any():
            candidates.append((lab, model))

    confidence = np.ones((h, w), dtype=np.float64)
    free = labels < 0
    if free.any():
        if not candidates:
            labels[free] = BACKGROUND
            confidence[free] = 0.0
        else:
            free_idx = np.flatnonzero(free.reshape(-1))
            lls = np.stack([m.log_likelihood(flat[free_idx]) for _, m in candidates], axis=1)
            pick = np.argmax(lls, axis=1)  # first max wins: priority tie-break
            lab_arr = np.array([lab for lab, _ in candidates])
            labels.reshape(-1)[free_idx] = lab_arr[pick]
            mx = lls.max(axis=1, keepdims=True)
            post = np.exp(lls[np.arange(len(pick)), pick] - (mx[:, 0] + np.log(np.exp(lls - mx).sum(axis=1))))
            confidence.reshape(-1)[free_idx] = post

    return LabelMap(labels=labels.astype(np.uint8), confidence=confidence)
