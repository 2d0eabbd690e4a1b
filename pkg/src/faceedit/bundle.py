"""Readers and writers for every artifact format.

Formats (all multi-byte encodings little-endian; see docs/formats.md):

* ``FRAS`` float raster: magic, u32 height/width/channels, float32 row-major.
* ``IRAS`` integer raster: magic, u32 height/width/channels, int32 row-major.
* ``FMM1`` morphable model: magic, u32 counts (V, Ki, Ke, mixture components,
  triangles, landmarks, region groups), then float32 mean, column-major
  identity and expression bases, u32 triangles and landmark indices, float32
  mixture weights/means/diagonal covariances, then named vertex groups.
  A JSON twin of the same content is accepted for hand-authored fixtures.
* landmark files: text, one ``x y`` pair per line, origin top-left.
* light rigs: JSON documents (the wire format the service round-trips).
* masks and label maps: 8-bit PNG (masks 0/255; labels 0/128/255 for
  background/hair/face; region partitions 0-9).
* representation bundles: a directory holding the rasters above plus a JSON
  manifest (fit parameters, lighting coefficients, config echo, timings,
  image hash).
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .config import Config
from .detail import DetailMap, RegionPartition
from .edits import FaceRepresentation
from .geometry import FaceFit, GeometryBuffers, GmmPrior, MorphableModel
from .imops import quantize_u8
from .lighting import LightRig, ShFit
from .segmentation import LABEL_PIXEL_VALUES, LabelMap, RegionMasks

BUNDLE_VERSION = 1

_FRAS_MAGIC = b"FRAS"
_IRAS_MAGIC = b"IRAS"
_FMM_MAGIC = b"FMM1"


# ---------------------------------------------------------------------------
# rasters
# ---------------------------------------------------------------------------

def write_fras(path: Path, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=np.float32)
    if array.ndim == 2:
        array = array[..., None]
    h, w, c = array.shape
    with open(path, "wb") as f:
        f.write(_FRAS_MAGIC)
        f.write(struct.pack("<III", h, w, c))
        f.write(array.astype("<f4").tobytes(order="C"))


def read_fras(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != _FRAS_MAGIC:
        raise ValueError(f"{path}: not a float raster")
    h, w, c = struct.unpack("<III", data[4:16])
    expected = 16 + h * w * c * 4
    if len(data) != expected:
        raise ValueError(f"{path}: truncated float raster")
    arr = np.frombuffer(data[16:], dtype="<f4").reshape(h, w, c)
    return arr[..., 0] if c == 1 else arr


def write_iras(path: Path, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=np.int32)
    if array.ndim == 2:
        array = array[..., None]
    h, w, c = array.shape
    with open(path, "wb") as f:
        f.write(_IRAS_MAGIC)
        f.write(struct.pack("<III", h, w, c))
        f.write(array.astype("<i4").tobytes(order="C"))


def read_iras(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != _IRAS_MAGIC:
        raise ValueError(f"{path}: not an integer raster")
    h, w, c = struct.unpack("<III", data[4:16])
    if len(data) != 16 + h * w * c * 4:
        raise ValueError(f"{path}: truncated integer raster")
    arr = np.frombuffer(data[16:], dtype="<i4").reshape(h, w, c)
    return arr[..., 0] if c == 1 else arr


# ---------------------------------------------------------------------------
# images and masks
# ---------------------------------------------------------------------------

def image_to_png_bytes(image: np.ndarray) -> bytes:
    """Float [0,1] image to PNG bytes; the single quantization point shared
    by the CLI and the service."""
    buf = io.BytesIO()
    Image.fromarray(quantize_u8(image)).save(buf, format="PNG")
    return buf.getvalue()


def save_image(path: Path, image: np.ndarray) -> None:
    Path(path).write_bytes(image_to_png_bytes(image))


def load_image(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_mask(path: Path, mask: np.ndarray) -> None:
    Image.fromarray((mask.astype(np.uint8)) * 255).save(path, format="PNG")


def load_mask(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) >= 128


def save_labels(path: Path, labels: LabelMap) -> None:
    lut = np.zeros(256, dtype=np.uint8)
    for label, value in LABEL_PIXEL_VALUES.items():
        lut[label] = value
    Image.fromarray(lut[labels.labels]).save(path, format="PNG")


def load_label_values(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        values = np.asarray(im.convert("L"))
    out = np.zeros_like(values, dtype=np.uint8)
    for label, value in LABEL_PIXEL_VALUES.items():
        out[values == value] = label
    return out


def save_shading_png16(path: Path, shading: np.ndarray) -> None:
    """16-bit preview export of a shading field (clipped at 1)."""
    arr = np.clip(shading, 0.0, 1.0)
    Image.fromarray((arr * 65535.0 + 0.5).astype(np.uint16)).save(path, format="PNG")


# ---------------------------------------------------------------------------
# landmarks
# ---------------------------------------------------------------------------

def save_landmarks(path: Path, landmarks: np.ndarray) -> None:
    lines = [f"{float(x)!r} {float(y)!r}" for x, y in np.asarray(landmarks, dtype=float)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_landmarks(path: Path) -> np.ndarray:
    points = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'x y'")
        points.append((float(parts[0]), float(parts[1])))
    if not points:
        raise ValueError(f"{path}: no landmarks")
    return np.asarray(points, dtype=np.float64)


# ---------------------------------------------------------------------------
# light rigs
# ---------------------------------------------------------------------------

def save_rig(path: Path, rig: LightRig) -> None:
    Path(path).write_text(json.dumps(rig.to_dict(), indent=2) + "\n")


def load_rig(path: Path) -> LightRig:
    return LightRig.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# morphable model
# ---------------------------------------------------------------------------

def save_model(path: Path, model: MorphableModel) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(_model_to_doc(model)))
        return
    v = model.n_vertices
    prior = model.prior
    groups = list(model.region_groups.items())
    with open(path, "wb") as f:
        f.write(_FMM_MAGIC)
        f.write(struct.pack(
            "<7I", v, model.n_identity, model.n_expression,
            len(prior.weights), len(model.triangles), len(model.landmark_indices), len(groups),
        ))
        f.write(model.mean_mesh.astype("<f4").tobytes(order="C"))
        f.write(model.identity_basis.astype("<f4").tobytes(order="F"))
        f.write(model.expression_basis.astype("<f4").tobytes(order="F"))
        f.write(model.triangles.astype("<u4").tobytes(order="C"))
        f.write(model.landmark_indices.astype("<u4").tobytes(order="C"))
        f.write(prior.weights.astype("<f4").tobytes(order="C"))
        f.write(prior.means.astype("<f4").tobytes(order="C"))
        f.write(prior.covariances.astype("<f4").tobytes(order="C"))
        for name, ids in groups:
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", len(ids)))
            f.write(np.asarray(ids).astype("<u4").tobytes(order="C"))


def load_model(path: Path, prior_scale: float = 1.0) -> MorphableModel:
    path = Path(path)
    if path.suffix == ".json":
        return _model_from_doc(json.loads(path.read_text()), prior_scale)
    data = path.read_bytes()
    if data[:4] != _FMM_MAGIC:
        raise ValueError(f"{path}: not a face model file")
    v, ki, ke, nc, nt, nl, ng = struct.unpack("<7I", data[4:32])
    off = 32

    def take(count, dtype):
        nonlocal off
        nbytes = count * np.dtype(dtype).itemsize
        if off + nbytes > len(data):
            raise ValueError(f"{path}: truncated model file")
        arr = np.frombuffer(data[off:off + nbytes], dtype=dtype)
        off += nbytes
        return arr

    mean = take(3 * v, "<f4").astype(np.float64).reshape(v, 3)
    ident = take(3 * v * ki, "<f4").astype(np.float64).reshape(3 * v, ki, order="F")
    expr = take(3 * v * ke, "<f4").astype(np.float64).reshape(3 * v, ke, order="F")
    tris = take(3 * nt, "<u4").reshape(nt, 3)
    lms = take(nl, "<u4").copy()
    weights = take(nc, "<f4").astype(np.float64)
    means = take(nc * (ki + ke), "<f4").astype(np.float64).reshape(nc, ki + ke)
    covs = take(nc * (ki + ke), "<f4").astype(np.float64).reshape(nc, ki + ke)
    weights = weights / weights.sum()  # float32 storage may drift the simplex
    groups = {}
    for _ in range(ng):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nlen].decode("utf-8")
        off += nlen
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        ids = np.frombuffer(data[off:off + 4 * count], dtype="<u4").copy()
        off += 4 * count
        groups[name] = ids
    model = MorphableModel(
        mean_mesh=mean,
        identity_basis=ident,
        expression_basis=expr,
        triangles=tris.astype(np.uint32),
        landmark_indices=lms.astype(np.uint32),
        prior=GmmPrior(weights, means, covs, scale=prior_scale),
        region_groups=groups,
    )
    model.validate()
    return model


def _model_to_doc(model: MorphableModel) -> dict:
    return {
        "format": "fmm-json",
        "version": 1,
        "mean_mesh": model.mean_mesh.tolist(),
        "identity_basis": model.identity_basis.tolist(),
        "expression_basis": model.expression_basis.tolist(),
        "triangles": model.triangles.tolist(),
        "landmark_indices": model.landmark_indices.tolist(),
        "prior": {
            "weights": model.prior.weights.tolist(),
            "means": model.prior.means.tolist(),
            "covariances": model.prior.covariances.tolist(),
        },
        "region_groups": {k: v.tolist() for k, v in model.region_groups.items()},
    }


def _model_from_doc(doc: dict, prior_scale: float) -> MorphableModel:
    if doc.get("format") != "fmm-json":
        raise ValueError("not a face model document")
    model = MorphableModel(
        mean_mesh=np.asarray(doc["mean_mesh"], dtype=np.float64),
        identity_basis=np.asarray(doc["identity_basis"], dtype=np.float64),
        expression_basis=np.asarray(doc["expression_basis"], dtype=np.float64),
        triangles=np.asarray(doc["triangles"], dtype=np.uint32),
        landmark_indices=np.asarray(doc["landmark_indices"], dtype=np.uint32),
        prior=GmmPrior(
            np.asarray(doc["prior"]["weights"], dtype=np.float64),
            np.asarray(doc["prior"]["means"], dtype=np.float64),
            np.asarray(doc["prior"]["covariances"], dtype=np.float64),
            scale=prior_scale,
        ),
        region_groups={k: np.asarray(v, dtype=np.uint32) for k, v in doc.get("region_groups", {}).items()},
    )
    model.validate()
    return model


# ---------------------------------------------------------------------------
# representation bundles
# ---------------------------------------------------------------------------

def _fit_to_doc(fit: FaceFit) -> dict:
    return {
        "omega_i": fit.omega_i.tolist(),
        "omega_e": fit.omega_e.tolist(),
        "rotation": fit.rotation.tolist(),
        "translation": fit.translation.tolist(),
        "scale": float(fit.scale),
        "residual": float(fit.residual),
        "ill_conditioned": bool(fit.ill_conditioned),
    }


def _fit_from_doc(doc: dict) -> FaceFit:
    return FaceFit(
        omega_i=np.asarray(doc["omega_i"], dtype=np.float64),
        omega_e=np.asarray(doc["omega_e"], dtype=np.float64),
        rotation=np.asarray(doc["rotation"], dtype=np.float64),
        translation=np.asarray(doc["translation"], dtype=np.float64),
        scale=float(doc["scale"]),
        residual=float(doc["residual"]),
        ill_conditioned=bool(doc["ill_conditioned"]),
    )


def save_representation(rep: FaceRepresentation, path: Path) -> None:
    """Persist a recovered representation; sufficient to re-run any edit."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    save_image(path / "image.png", rep.image)
    save_labels(path / "labels.png", rep.labels)
    write_fras(path / "confidence.fras", rep.labels.confidence)
    save_mask(path / "mask_conservative.png", rep.masks.conservative)
    save_mask(path / "mask_normal.png", rep.masks.normal)
    save_mask(path / "mask_aggressive.png", rep.masks.aggressive)
    save_mask(path / "coverage.png", rep.buffers.coverage_mask)
    write_fras(path / "normals.fras", rep.buffers.normal_map)
    write_fras(path / "depth.fras", rep.buffers.depth_map)
    write_fras(path / "bary.fras", rep.buffers.bary_map)
    write_iras(path / "triangles.iras", rep.buffers.triangle_map)
    write_fras(path / "shading.fras", rep.shading)
    save_shading_png16(path / "shading16.png", rep.shading)
    write_fras(path / "albedo.fras", rep.albedo)
    detail = np.concatenate([rep.detail.values, rep.detail.valid[..., None].astype(np.float64)], axis=2)
    write_fras(path / "detail.fras", detail)
    Image.fromarray(rep.partition.labels).save(path / "partition.png", format="PNG")
    save_model(path / "model.fmm", rep.model)

    manifest = {
        "version": BUNDLE_VERSION,
        "image_sha256": hashlib.sha256((path / "image.png").read_bytes()).hexdigest(),
        "fit": _fit_to_doc(rep.fit),
        "theta": rep.theta.tolist(),
        "sh_fit": {"residual": rep.sh_fit.residual, "rank_deficient": rep.sh_fit.rank_deficient},
        "config": rep.config.to_dict(),
        "timings": rep.timings,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_representation(path: Path) -> FaceRepresentation:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: corrupt manifest: {exc}") from None
    if manifest.get("version") != BUNDLE_VERSION:
        raise ValueError(f"{path}: unsupported bundle version {manifest.get('version')!r}")
    digest = hashlib.sha256((path / "image.png").read_bytes()).hexdigest()
    if digest != manifest["image_sha256"]:
        raise ValueError(f"{path}: image hash mismatch (bundle tampered or mixed)")

    config = Config(**manifest["config"])
    image = load_image(path / "image.png")
    buffers = GeometryBuffers(
        normal_map=read_fras(path / "normals.fras"),
        depth_map=read_fras(path / "depth.fras"),
        coverage_mask=load_mask(path / "coverage.png"),
        triangle_map=read_iras(path / "triangles.iras").astype(np.int32),
        bary_map=read_fras(path / "bary.fras"),
    )
    labels = LabelMap(
        labels=load_label_values(path / "labels.png"),
        confidence=np.asarray(read_fras(path / "confidence.fras"), dtype=np.float64),
    )
    masks = RegionMasks(
        conservative=load_mask(path / "mask_conservative.png"),
        normal=load_mask(path / "mask_normal.png"),
        aggressive=load_mask(path / "mask_aggressive.png"),
    )
    detail_raw = read_fras(path / "detail.fras")
    detail = DetailMap(values=np.asarray(detail_raw[..., 0:3], dtype=np.float64),
                       valid=detail_raw[..., 3] > 0.5)
    with Image.open(path / "partition.png") as im:
        partition = RegionPartition(labels=np.asarray(im).astype(np.uint8))
    model = load_model(path / "model.fmm", prior_scale=config.prior_scale)

    return FaceRepresentation(
        image=image,
        fit=_fit_from_doc(manifest["fit"]),
        buffers=buffers,
        labels=labels,
        masks=masks,
        shading=np.asarray(read_fras(path / "shading.fras"), dtype=np.float64),
        albedo=np.asarray(read_fras(path / "albedo.fras"), dtype=np.float64),
        theta=np.asarray(manifest["theta"], dtype=np.float64),
        sh_fit=ShFit(
            theta=np.asarray(manifest["theta"], dtype=np.float64),
            residual=float(manifest["sh_fit"]["residual"]),
            rank_deficient=bool(manifest["sh_fit"]["rank_deficient"]),
        ),
        detail=detail,
        partition=partition,
        model=model,
        config=config,
        timings=dict(manifest.get("timings", {})),
    )
