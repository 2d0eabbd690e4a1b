"""Representation recovery and the user-facing edits: relighting, makeup
transfer, detail transfer, the ablation baselines, and study-pair bundling.

Every edit re-renders the recovered representation under (possibly new)
lighting and adds back an additive detail layer; compositing outside the
face follows the label map (new shading on the face, brightness-weighted
original shading on hair, constant mixture on the background).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .config import Config, DEFAULT_CONFIG
from .detail import (
    DetailMap,
    RegionPartition,
    blend_details,
    detail_map,
    flow_refine,
    nine_regions,
    protection_mask,
    warp_detail,
)
from .geometry import (
    FaceFit,
    GeometryBuffers,
    MorphableModel,
    fit_face,
    pixel_correspondence,
    rasterize,
)
from .geometry.model import REGION_NAMES
from .imops import dilate, erode, gaussian, nearest_inside_indices
from .intrinsics import decompose
from .lighting import LightRig, ShFit, fit_sh, shading_field
from .segmentation import (
    FACE,
    HAIR,
    LabelMap,
    RegionMasks,
    hair_detector,
    matting_refine,
    mr8,
    prepare_features,
    region_masks,
    segment,
)
from scipy import ndimage


class StageError(RuntimeError):
    """Pipeline failure tagged with the stage it happened in."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class FaceRepresentation:
    image: np.ndarray
    fit: FaceFit
    buffers: GeometryBuffers
    labels: LabelMap
    masks: RegionMasks
    shading: np.ndarray
    albedo: np.ndarray
    theta: np.ndarray
    sh_fit: ShFit
    detail: DetailMap
    partition: RegionPartition
    model: MorphableModel
    config: Config = field(default_factory=Config)
    timings: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape[:2]

    def face_mask(self) -> np.ndarray:
        return self.labels.face_mask()

    def recovered_rig(self) -> LightRig:
        return LightRig.from_theta(self.theta)


@dataclass
class EditOptions:
    detail_mode: str = "keep"              # keep | none
    regions: tuple = ()
    scattering_sigma: float | None = None  # None: config default
    hair_bright_bias: float | None = None
    background_mix: float | None = None

    def validate(self) -> None:
        if self.detail_mode not in ("keep", "none"):
            raise ValueError(f"unknown detail mode {self.detail_mode!r}")
        for name in ("hair_bright_bias", "background_mix"):
            v = getattr(self, name)
            if v is not None and not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]")
        if self.scattering_sigma is not None and self.scattering_sigma < 0:
            raise ValueError("scattering_sigma must be nonnegative")
        bad = set(self.regions) - set(REGION_NAMES)
        if bad:
            raise ValueError(f"unknown regions: {sorted(bad)}")


@dataclass
class EditResult:
    image: np.ndarray
    clamp_count: int
    render_seconds: float
    notes: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# recovery
# ---------------------------------------------------------------------------

def recover(
    image: np.ndarray,
    landmarks: np.ndarray,
    model: MorphableModel,
    config: Config = DEFAULT_CONFIG,
) -> FaceRepresentation:
    """Run the full recovery pipeline; stage failures carry the stage name."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise StageError("input", "expected an (H, W, 3) image")
    if image.min() < 0 or image.max() > 1:
        raise StageError("input", "image values must lie in [0, 1]")
    height, width = image.shape[:2]
    timings: dict[str, float] = {}

    def run(stage, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, str(exc)) from exc
        timings[stage] = time.perf_counter() - t0
        return out

    fit = run("geometry.fit", lambda: fit_face(landmarks, model, config=config))
    buffers = run("geometry.raster", lambda: rasterize(fit, model, width, height))
    if not buffers.coverage_mask.any():
        raise StageError("geometry.raster", "fitted mesh projects outside the image")
    masks = run("segmentation.masks", lambda: region_masks(buffers.coverage_mask, config))
    features = run("segmentation.features", lambda: prepare_features(image, mr8(image)))
    hair = run("segmentation.hair", lambda: hair_detector(image, masks, features, config))
    labels = run("segmentation.labels", lambda: segment(image, masks, hair, features, config))
    labels = run("segmentation.matting", lambda: _refine_face_label(image, labels, config))
    shading, albedo = run("intrinsics", lambda: decompose(image, config))
    face_px = labels.face_mask() & buffers.coverage_mask
    if face_px.sum() < 4:
        raise StageError("lighting.fit", "no face pixels under mesh coverage")
    sh = run("lighting.fit", lambda: fit_sh(shading, buffers.normal_map.astype(np.float64), face_px))
    detail = run("detail", lambda: detail_map(image, albedo, buffers, sh.theta))
    partition = run("regions", lambda: nine_regions(fit, model, buffers))

    return FaceRepresentation(
        image=image,
        fit=fit,
        buffers=buffers,
        labels=labels,
        masks=masks,
        shading=shading,
        albedo=albedo,
        theta=sh.theta,
        sh_fit=sh,
        detail=detail,
        partition=partition,
        model=model,
        config=config,
        timings=timings,
    )


def _refine_face_label(image: np.ndarray, labels: LabelMap, config: Config) -> LabelMap:
    """Correct the face mask with the matting solve; other labels keep their
    identity outside the refined face."""
    face = labels.face_mask()
    if not face.any() or face.all():
        return labels
    band = float(config.matting_band_px)
    din = ndimage.distance_transform_edt(face)
    dout = ndimage.distance_transform_edt(~face)
    unknown = (face & (din <= band)) | (~face & (dout <= band))
    trimap = np.where(face, 1.0, 0.0)
    trimap[unknown] = 0.5
    if not (trimap == 1.0).any() or not (trimap == 0.0).any():
        return labels
    alpha = matting_refine(image, trimap, config)
    refined = alpha > 0.5
    new_labels = np.where(refined, FACE, np.where(labels.labels == HAIR, HAIR, 0)).astype(np.uint8)
    changed = new_labels != labels.labels
    confidence = np.where(changed, np.abs(2.0 * alpha - 1.0), labels.confidence)
    return LabelMap(labels=new_labels, confidence=confidence)


# ---------------------------------------------------------------------------
# shading pipeline pieces
# ---------------------------------------------------------------------------

def extend_shading(face_shading: np.ndarray, face_mask: np.ndarray, config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """Fill the whole frame with each pixel's nearest in-mask shading value,
    then smooth outside the mask only."""
    if not face_mask.any():
        raise ValueError("face mask is empty")
    ir, ic = nearest_inside_indices(face_mask)
    extended = face_shading[ir, ic]
    smoothed = gaussian(extended, config.extend_sigma)
    if face_shading.ndim == 3:
        return np.where(face_mask[..., None], face_shading, smoothed)
    return np.where(face_mask, face_shading, smoothed)


def blend_shading(
    s_new: np.ndarray,
    s_orig: np.ndarray,
    labels: LabelMap,
    opts: EditOptions | None = None,
    config: Config = DEFAULT_CONFIG,
) -> np.ndarray:
    """Per-label mixture of new and original shading with feathered seams.

    Face keeps the new shading; hair keeps the original in proportion to its
    brightness (specular strands survive relighting); the background is a
    constant mixture.
    """
    opts = opts or EditOptions()
    bias = config.hair_bright_bias if opts.hair_bright_bias is None else opts.hair_bright_bias
    mix = config.background_mix if opts.background_mix is None else opts.background_mix

    if s_new.ndim == 2:
        s_new = s_new[..., None]
    orig = s_orig[..., None] if s_orig.ndim == 2 else s_orig

    face = labels.face_mask()
    hair = labels.hair_mask()
    bg = ~face & ~hair

    hair_field = s_new
    if hair.any():
        p95 = np.percentile(s_orig[hair], config.hair_bright_percentile)
        w_h = bias * np.clip(s_orig / max(p95, 1e-12), 0.0, 1.0)
        w_h = w_h[..., None]
        hair_field = w_h * orig + (1.0 - w_h) * s_new
    bg_field = mix * orig + (1.0 - mix) * s_new

    sigma = config.label_feather_sigma
    wf = gaussian(face.astype(np.float64), sigma)
    wh = gaussian(hair.astype(np.float64), sigma)
    wb = gaussian(bg.astype(np.float64), sigma)
    # the face seam feathers inward only: hair/background pixels never receive
    # rendered-face shading, so an identity rig leaves them untouched
    wf[~face] = 0.0
    total = np.maximum(wf + wh + wb, 1e-12)
    out = (wf[..., None] * s_new + wh[..., None] * hair_field + wb[..., None] * bg_field) / total[..., None]
    return out


def scattering_smooth(
    shading: np.ndarray,
    sigma: float,
    face_mask: np.ndarray,
    config: Config = DEFAULT_CONFIG,
) -> np.ndarray:
    """Soft-tissue light diffusion approximation: mask-normalized Gaussian
    blur of the shading inside the face region.

    Smoothed values are committed only where the kernel support fits inside
    the face; a half-covered kernel at the silhouette would systematically
    drag boundary shading toward the interior.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0 or not face_mask.any():
        return shading.copy()
    m = face_mask.astype(np.float64)
    den = np.maximum(gaussian(m, sigma), 1e-12)
    deep = erode(face_mask, int(4.0 * sigma + 0.5))
    if shading.ndim == 3:
        num = gaussian(shading * m[..., None], sigma)
        blurred = num / den[..., None]
        return np.where(deep[..., None], blurred, shading)
    blurred = gaussian(shading * m, sigma) / den
    return np.where(deep, blurred, shading)


def _final_shading(rep: FaceRepresentation, rig: LightRig, opts: EditOptions, config: Config) -> np.ndarray:
    s_new = shading_field(rep.buffers, rig, config)
    face_src = rep.face_mask() & rep.buffers.coverage_mask
    if not face_src.any():
        raise StageError("relight", "no face pixels under mesh coverage")
    s_ext = extend_shading(s_new, face_src, config)
    s_blend = blend_shading(s_ext, rep.shading, rep.labels, opts, config)
    sigma = config.scattering_sigma if opts.scattering_sigma is None else opts.scattering_sigma
    return scattering_smooth(s_blend, sigma, rep.face_mask(), config)


def _composite(
    rep: FaceRepresentation,
    rig: LightRig,
    opts: EditOptions,
    config: Config,
    detail_override: DetailMap | None = None,
    albedo_override: np.ndarray | None = None,
    face_only_source: np.ndarray | None = None,
) -> EditResult:
    t0 = time.perf_counter()
    opts.validate()
    s_fin = _final_shading(rep, rig, opts, config)
    albedo = rep.albedo if albedo_override is None else albedo_override
    out = albedo * s_fin

    if detail_override is not None:
        det = detail_override
    elif opts.detail_mode == "none":
        det = None
    else:
        det = rep.detail
    if det is not None:
        # the residual is defined against the rendered face; pixels that keep
        # original-shading compositing (background rim under the mesh) must
        # not receive it
        add_zone = det.valid & rep.face_mask()
        out = out + np.where(add_zone[..., None], det.values, 0.0)

    if face_only_source is not None:
        face = rep.face_mask()
        out = np.where(face[..., None], out, face_only_source)

    clamp_count = int(np.count_nonzero((out < 0.0) | (out > 1.0)))
    image = np.clip(out, 0.0, 1.0)
    return EditResult(image=image, clamp_count=clamp_count, render_seconds=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# edits
# ---------------------------------------------------------------------------

def relight(
    rep: FaceRepresentation,
    rig: LightRig,
    opts: EditOptions | None = None,
    config: Config | None = None,
) -> EditResult:
    """Re-render the representation under a new light rig."""
    opts = opts or EditOptions()
    config = config or rep.config
    return _composite(rep, rig, opts, config)


def _check_same_model(a: FaceRepresentation, b: FaceRepresentation) -> None:
    if a.model.mean_mesh.shape != b.model.mean_mesh.shape or not np.array_equal(
        a.model.mean_mesh, b.model.mean_mesh
    ):
        raise StageError("correspondence", "representations use different face models")


def _refined_correspondence(
    input_rep: FaceRepresentation,
    ref: FaceRepresentation,
    config: Config,
):
    warp = pixel_correspondence(input_rep.fit, ref.fit, input_rep.model, input_rep.buffers, ref.buffers)
    cov = input_rep.buffers.coverage_mask
    overlap = float(warp.valid[cov].mean()) if cov.any() else 0.0
    if overlap < 0.3:
        raise StageError("correspondence", f"face coverage overlap {overlap:.0%} is below 30%")
    return flow_refine(ref.image, input_rep.image, warp, config)


def boundary_process(image: np.ndarray, face_mask: np.ndarray, config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """Shrink the face boundary, then mirror a ring of pixels across it.

    Pixels within ``boundary_ring_px`` outside the shrunk mask are replaced by
    their reflection through the nearest boundary point (hair bleed removal).
    """
    if not face_mask.any():
        raise ValueError("face mask is empty")
    eroded = erode(face_mask, float(config.shrink_px))
    if not eroded.any():
        raise ValueError("face mask vanished under boundary shrink")
    dist, (ir, ic) = ndimage.distance_transform_edt(~eroded, return_indices=True)
    h, w = face_mask.shape
    rows, cols = np.mgrid[:h, :w]
    ring = (~eroded) & (dist <= config.boundary_ring_px)
    mr = np.clip(2 * ir - rows, 0, h - 1)
    mc = np.clip(2 * ic - cols, 0, w - 1)
    out = image.copy()
    out[ring] = image[mr[ring], mc[ring]]
    return out


def makeup_transfer(
    input_rep: FaceRepresentation,
    ref: FaceRepresentation,
    rig: LightRig | None = None,
    opts: EditOptions | None = None,
    config: Config | None = None,
) -> EditResult:
    """Swap the reference albedo onto the input geometry while protecting
    the input's detail around the eyes, nose, and mouth."""
    opts = opts or EditOptions()
    config = config or input_rep.config
    _check_same_model(input_rep, ref)
    warp = _refined_correspondence(input_rep, ref, config)

    ref_face = ref.face_mask()
    stacked = np.concatenate(
        [ref.albedo, ref.detail.values, ref.detail.valid[..., None].astype(np.float64)], axis=2
    )
    processed = boundary_process(stacked, ref_face, config)
    ref_albedo = processed[..., 0:3]
    ref_detail = DetailMap(values=processed[..., 3:6], valid=processed[..., 6] > 0.5)

    warped_albedo = warp.sample(ref_albedo)
    albedo = np.where(warp.valid[..., None], warped_albedo, input_rep.albedo)
    warped_detail = warp_detail(ref_detail, warp)
    weight = protection_mask(input_rep.partition, config.feather_px)
    blended = blend_details(input_rep.detail, warped_detail, weight)

    use_rig = rig or input_rep.recovered_rig()
    result = _composite(
        input_rep,
        use_rig,
        opts,
        config,
        detail_override=blended,
        albedo_override=albedo,
        face_only_source=input_rep.image,
    )
    result.notes["refinement_failed"] = warp.refinement_failed
    return result


def detail_transfer(
    input_rep: FaceRepresentation,
    ref: FaceRepresentation,
    regions: tuple,
    rig: LightRig | None = None,
    opts: EditOptions | None = None,
    config: Config | None = None,
) -> EditResult:
    """Replace the detail map inside selected standard regions with the
    reference's (warped) detail; everything else matches a keep-mode relight."""
    opts = opts or EditOptions()
    opts = replace(opts, regions=tuple(regions))
    opts.validate()
    config = config or input_rep.config
    use_rig = rig or input_rep.recovered_rig()
    if not regions:
        return relight(input_rep, use_rig, replace(opts, regions=()), config)

    _check_same_model(input_rep, ref)
    warp = _refined_correspondence(input_rep, ref, config)
    warped_detail = warp_detail(ref.detail, warp)

    zone = input_rep.partition.union(regions)
    if zone.any():
        core = dilate(zone, config.feather_px / 2.0)
        ramp = np.clip(1.0 - ndimage.distance_transform_edt(~core) / config.feather_px, 0.0, 1.0)
    else:
        ramp = np.zeros(input_rep.shape)
    blended = blend_details(input_rep.detail, warped_detail, 1.0 - ramp)

    result = _composite(input_rep, use_rig, opts, config, detail_override=blended)
    result.notes["refinement_failed"] = warp.refinement_failed
    result.notes["region_ramp"] = ramp
    return result


def multiplicative_baseline(
    rep: FaceRepresentation,
    rig: LightRig,
    opts: EditOptions | None = None,
    config: Config | None = None,
) -> EditResult:
    """Ratio-image ablation: scale the input by new/old render ratios."""
    t0 = time.perf_counter()
    opts = opts or EditOptions()
    config = config or rep.config
    eps = config.shading_floor
    old_rig = rep.recovered_rig()

    s_new = _final_shading(rep, rig, opts, config)
    s_old = _final_shading(rep, old_rig, opts, config)
    ratio = s_new / np.maximum(s_old, eps)
    saturated = int(np.count_nonzero(s_old < eps))

    face_cov = rep.face_mask() & rep.buffers.coverage_mask
    num = rep.albedo * shading_field(rep.buffers, rig, config)
    den = rep.albedo * shading_field(rep.buffers, old_rig, config)
    saturated += int(np.count_nonzero(den[face_cov] < eps))
    face_ratio = num / np.maximum(den, eps)
    ratio = np.where(face_cov[..., None], face_ratio, ratio)

    out = rep.image * ratio
    clamp_count = int(np.count_nonzero((out < 0.0) | (out > 1.0)))
    image = np.clip(out, 0.0, 1.0)
    result = EditResult(image=image, clamp_count=clamp_count, render_seconds=time.perf_counter() - t0)
    result.notes["ratio_saturation_count"] = saturated
    return result


def no_detail_baseline(
    rep: FaceRepresentation,
    rig: LightRig,
    opts: EditOptions | None = None,
    config: Config | None = None,
) -> EditResult:
    opts = replace(opts or EditOptions(), detail_mode="none")
    return relight(rep, rig, opts, config)


# ---------------------------------------------------------------------------
# study pairs
# ---------------------------------------------------------------------------

@dataclass
class StudyItem:
    name: str
    edited: np.ndarray
    original: np.ndarray
    mask: np.ndarray | None = None  # present when the edited image is masked


@dataclass
class StudyPair:
    name: str
    left: np.ndarray
    right: np.ndarray
    edited_side: str
    masked: bool


def study_pairs(items: list[StudyItem], seed: int) -> list[StudyPair]:
    """Deterministic left/right shuffles; a masked edit masks its original too."""
    if not items:
        raise ValueError("no study items")
    rng = np.random.default_rng(seed)
    pairs = []
    for item in items:
        edited = item.edited
        original = item.original
        masked = item.mask is not None
        if masked:
            m = item.mask.astype(np.float64)
            if m.ndim == 2:
                m = m[..., None]
            edited = edited * m
            original = original * m
        left_is_edited = bool(rng.integers(0, 2))
        left, right = (edited, original) if left_is_edited else (original, edited)
        pairs.append(StudyPair(
            name=item.name,
            left=left,
            right=right,
            edited_side="left" if left_is_edited else "right",
            masked=masked,
        ))
    return pairs
