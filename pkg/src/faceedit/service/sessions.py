"""Session state for interactive relighting.

A session holds a recovered representation, the current light rig, and a
preview-scale copy of the representation (albedo, geometry, labels, and
detail are subsampled once; every rig update recomputes only shading and the
composite). Mutations on one session are serialized; the last write wins.
"""

from __future__ import annotations

import dataclasses
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np

from ..config import Config
from ..detail import DetailMap, RegionPartition
from ..edits import EditOptions, FaceRepresentation, relight
from ..geometry import GeometryBuffers
from ..lighting import LightRig, SpotLight
from ..segmentation import LabelMap, RegionMasks


def _subsample_rep(rep: FaceRepresentation, step: int) -> FaceRepresentation:
    """Nearest-pixel subsampling: preview pixels are exact full-res pixels."""
    if step == 1:
        return rep
    s = np.s_[::step, ::step]
    cfg = dataclasses.replace(
        rep.config,
        extend_sigma=rep.config.extend_sigma / step,
        scattering_sigma=rep.config.scattering_sigma / step,
        label_feather_sigma=rep.config.label_feather_sigma / step,
        feather_px=rep.config.feather_px / step,
    )
    buffers = GeometryBuffers(
        normal_map=rep.buffers.normal_map[s],
        depth_map=rep.buffers.depth_map[s] / step,
        coverage_mask=rep.buffers.coverage_mask[s],
        triangle_map=rep.buffers.triangle_map[s],
        bary_map=rep.buffers.bary_map[s],
    )
    return dataclasses.replace(
        rep,
        image=rep.image[s],
        buffers=buffers,
        labels=LabelMap(labels=rep.labels.labels[s], confidence=rep.labels.confidence[s]),
        masks=RegionMasks(rep.masks.conservative[s], rep.masks.normal[s], rep.masks.aggressive[s]),
        shading=rep.shading[s],
        albedo=rep.albedo[s],
        detail=DetailMap(values=rep.detail.values[s], valid=rep.detail.valid[s]),
        partition=RegionPartition(labels=rep.partition.labels[s]),
        config=cfg,
    )


def _scale_rig(rig: LightRig, step: int) -> LightRig:
    """Positions live in full-res pixel units; scale them into preview units."""
    if step == 1:
        return rig
    return LightRig(
        sh=np.asarray(rig.sh, dtype=float),
        directionals=list(rig.directionals),
        spots=[
            SpotLight(s.position / step, s.direction, s.cone_angle, s.intensity, s.casts_shadow)
            for s in rig.spots
        ],
    )


@dataclass
class Session:
    rep: FaceRepresentation
    rig: LightRig
    preview_step: int
    preview_rep: FaceRepresentation
    id: str = field(default_factory=lambda: uuid.uuid4().hex)
    lock: threading.Lock = field(default_factory=threading.Lock)
    generation: int = 0
    preview: np.ndarray | None = None
    last_diagnostics: dict = field(default_factory=dict)

    def edit_options(self) -> EditOptions:
        cfg = self.rep.config
        return EditOptions(
            scattering_sigma=cfg.scattering_sigma,
            hair_bright_bias=cfg.hair_bright_bias,
            background_mix=cfg.background_mix,
        )

    def render_preview(self) -> dict:
        opts = EditOptions(
            scattering_sigma=self.preview_rep.config.scattering_sigma,
            hair_bright_bias=self.preview_rep.config.hair_bright_bias,
            background_mix=self.preview_rep.config.background_mix,
        )
        result = relight(self.preview_rep, _scale_rig(self.rig, self.preview_step), opts,
                         self.preview_rep.config)
        self.preview = result.image
        self.last_diagnostics = {
            "clamped_pixels": result.clamp_count,
            "render_seconds": result.render_seconds,
            "generation": self.generation,
            "preview_scale": 1.0 / self.preview_step,
        }
        return self.last_diagnostics

    def render_full(self) -> np.ndarray:
        result = relight(self.rep, self.rig, self.edit_options(), self.rep.config)
        return result.image


class SessionStore:
    def __init__(self, config: Config):
        self.config = config
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, rep: FaceRepresentation) -> Session:
        long_edge = max(rep.shape)
        step = max(1, int(np.ceil(long_edge / self.config.preview_long_edge)))
        session = Session(
            rep=rep,
            rig=rep.recovered_rig(),
            preview_step=step,
            preview_rep=_subsample_rep(rep, step),
        )
        with session.lock:
            session.render_preview()
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session | None:
        with self._lock:
            return self._sessions.get(session_id)

    def delete(self, session_id: str) -> bool:
        with self._lock:
            return self._sessions.pop(session_id, None) is not None
