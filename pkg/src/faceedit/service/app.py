"""HTTP boundary for interactive relighting sessions.

Endpoints:

* ``POST /sessions``: multipart image+landmarks (and optional model file)
  or a JSON/form reference to an existing bundle directory;
* ``PUT /sessions/{id}/rig``: replace the light rig, returns diagnostics;
* ``GET /sessions/{id}/preview``: current preview image (PNG);
* ``GET /sessions/{id}/export?full=1``: full-resolution render, identical
  bytes to the CLI relight for the same rig and config;
* ``DELETE /sessions/{id}``.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, Response, UploadFile
from pydantic import BaseModel, Field, field_validator

from .. import bundle as bio
from ..config import Config
from ..edits import StageError, recover
from ..lighting import DirectionalLight, LightRig, SpotLight
from .sessions import SessionStore


class DirectionalModel(BaseModel):
    direction: list[float] = Field(min_length=3, max_length=3)
    intensity: list[float] = Field(min_length=3, max_length=3)

    @field_validator("direction")
    @classmethod
    def _unit(cls, v):
        if abs(float(np.linalg.norm(v)) - 1.0) > 1e-6:
            raise ValueError("direction must be unit length")
        return v

    @field_validator("intensity")
    @classmethod
    def _nonneg(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("intensity must be nonnegative")
        return v


class SpotModel(BaseModel):
    position: list[float] = Field(min_length=3, max_length=3)
    direction: list[float] = Field(min_length=3, max_length=3)
    cone_angle: float = Field(gt=0.0, lt=float(np.pi))
    intensity: list[float] = Field(min_length=3, max_length=3)
    casts_shadow: bool = True

    @field_validator("direction")
    @classmethod
    def _unit(cls, v):
        if abs(float(np.linalg.norm(v)) - 1.0) > 1e-6:
            raise ValueError("direction must be unit length")
        return v

    @field_validator("intensity")
    @classmethod
    def _nonneg(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("intensity must be nonnegative")
        return v


class RigModel(BaseModel):
    sh: list[float] | list[list[float]]
    directionals: list[DirectionalModel] = Field(default_factory=list)
    spots: list[SpotModel] = Field(default_factory=list)

    def to_rig(self) -> LightRig:
        rig = LightRig(
            sh=np.asarray(self.sh, dtype=float),
            directionals=[
                DirectionalLight(np.asarray(d.direction, float), np.asarray(d.intensity, float))
                for d in self.directionals
            ],
            spots=[
                SpotLight(np.asarray(s.position, float), np.asarray(s.direction, float),
                          s.cone_angle, np.asarray(s.intensity, float), s.casts_shadow)
                for s in self.spots
            ],
        )
        rig.validate()
        return rig

    @classmethod
    def from_rig(cls, rig: LightRig) -> "RigModel":
        return cls.model_validate(rig.to_dict())


class SessionCreated(BaseModel):
    id: str
    width: int
    height: int
    preview_scale: float
    rig: RigModel


class RigUpdated(BaseModel):
    generation: int
    clamped_pixels: int
    render_seconds: float
    preview_scale: float


def create_app(model_path: str | None = None, config: Config | None = None) -> FastAPI:
    config = config or Config()
    app = FastAPI(title="faceedit relighting service")
    store = SessionStore(config)
    app.state.store = store

    def _get_or_404(session_id: str):
        session = store.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")
        return session

    @app.post("/sessions", response_model=SessionCreated)
    async def open_session(
        bundle: str | None = Form(default=None),
        image: UploadFile | None = File(default=None),
        landmarks: UploadFile | None = File(default=None),
        model: UploadFile | None = File(default=None),
    ):
        if bundle is not None:
            try:
                rep = bio.load_representation(Path(bundle))
            except (ValueError, OSError) as exc:
                raise HTTPException(status_code=422, detail=f"bundle: {exc}")
        elif image is not None and landmarks is not None:
            with tempfile.TemporaryDirectory() as tmp:
                img_path = Path(tmp) / "image.png"
                img_path.write_bytes(await image.read())
                lm_path = Path(tmp) / "landmarks.txt"
                lm_path.write_bytes(await landmarks.read())
                if model is not None:
                    mdl_path = Path(tmp) / "model.fmm"
                    mdl_path.write_bytes(await model.read())
                elif model_path is not None:
                    mdl_path = Path(model_path)
                else:
                    raise HTTPException(status_code=422,
                                        detail="no model file uploaded and no server default configured")
                try:
                    rep = recover(
                        bio.load_image(img_path),
                        bio.load_landmarks(lm_path),
                        bio.load_model(mdl_path, prior_scale=config.prior_scale),
                        config,
                    )
                except StageError as exc:
                    raise HTTPException(status_code=422,
                                        detail={"stage": exc.stage, "message": str(exc)})
                except ValueError as exc:
                    raise HTTPException(status_code=422, detail=str(exc))
        else:
            raise HTTPException(status_code=422,
                                detail="provide either a bundle reference or image+landmarks files")
        session = store.create(rep)
        h, w = session.rep.shape
        return SessionCreated(
            id=session.id,
            width=w,
            height=h,
            preview_scale=1.0 / session.preview_step,
            rig=RigModel.from_rig(session.rig),
        )

    @app.put("/sessions/{session_id}/rig", response_model=RigUpdated)
    def update_rig(session_id: str, rig: RigModel):
        session = _get_or_404(session_id)
        try:
            new_rig = rig.to_rig()
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        with session.lock:
            session.generation += 1
            session.rig = new_rig
            diag = session.render_preview()
        return RigUpdated(**diag)

    @app.get("/sessions/{session_id}/preview")
    def preview(session_id: str):
        session = _get_or_404(session_id)
        with session.lock:
            png = bio.image_to_png_bytes(session.preview)
        return Response(content=png, media_type="image/png")

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str, full: int = 1):
        session = _get_or_404(session_id)
        with session.lock:
            image = session.render_full() if full else session.preview
            png = bio.image_to_png_bytes(image)
        return Response(content=png, media_type="image/png")

    @app.delete("/sessions/{session_id}")
    def close(session_id: str):
        if not store.delete(session_id):
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")
        return {"closed": session_id}

    return app
