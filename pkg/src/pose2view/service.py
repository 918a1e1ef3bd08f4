"""HTTP inference service: pose in, PNG out.

The service loads checkpoints once at startup; model parameters are
read-only afterwards, so concurrent identical requests return identical
bytes.  A bounded semaphore caps concurrent inferences.  PNG is the only
wire format — lossless, so clients can compare bytes.
"""

from __future__ import annotations

import io
import json
import os
import threading
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel, Field

from .data import model_to_uint8
from .errors import CheckpointError
from .gennet import GenNetPredictor
from .pipeline import nearest_poses
from .pose import Pose, interpolate_trajectory
from .refinenet import RefinePredictor

QUAT_NORM_TOL = 1e-3
API = "/api/v1"


class SynthesisRequest(BaseModel):
    translation: list[float] = Field(min_length=3, max_length=3)
    quaternion: list[float] = Field(min_length=4, max_length=4,
                                    description="(w, x, y, z), unit norm")
    stage: str = "coarse"
    format: str = "png"


class TrajectoryRequest(BaseModel):
    keyposes: list[dict]
    frames_per_segment: int = 1
    stage: str = "coarse"


@dataclass
class LoadedModels:
    gennet: GenNetPredictor
    refiner: RefinePredictor | None = None
    train_samples: tuple = ()
    scene_name: str = "scene"
    config_hash: str = ""
    thumbnails: dict = field(default_factory=dict)  # index -> PNG bytes


@dataclass
class ServiceState:
    models: LoadedModels | None = None
    max_inflight: int = 2
    nearest_alpha: float = 1.0
    frame_store: dict = field(default_factory=dict)  # name -> PNG bytes

    def __post_init__(self):
        self._sem = threading.BoundedSemaphore(self.max_inflight)


def load_models(stage1_ckpt, refine_ckpt=None, train_samples=(),
                scene_name: str = "scene", thumbnail_loader=None) -> LoadedModels:
    """Build read-only predictors plus nearest-pose thumbnails."""
    gennet = GenNetPredictor(stage1_ckpt)
    refiner = RefinePredictor(refine_ckpt) if refine_ckpt is not None else None
    thumbnails = {}
    if thumbnail_loader is not None:
        for i, sample in enumerate(train_samples):
            img = thumbnail_loader(sample)
            thumbnails[i] = _png_bytes(model_to_uint8(img))
    return LoadedModels(gennet=gennet, refiner=refiner,
                        train_samples=tuple(train_samples),
                        scene_name=scene_name,
                        config_hash=stage1_ckpt.extra.get("experiment_hash",
                                                          stage1_ckpt.config_hash),
                        thumbnails=thumbnails)


def _png_bytes(img_u8: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img_u8).save(buf, format="PNG")
    return buf.getvalue()


def _error(status: int, message: str, field_name: str | None = None) -> JSONResponse:
    body = {"error": message}
    if field_name:
        body["field"] = field_name
    return JSONResponse(status_code=status, content=body)


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="pose2view inference service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"], expose_headers=["*"])

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        errors = exc.errors()
        field_name = None
        if errors and errors[0].get("loc"):
            loc = [str(p) for p in errors[0]["loc"] if p != "body"]
            field_name = ".".join(loc) or None
        return _error(400, "malformed request", field_name)

    def models_or_none() -> LoadedModels | None:
        return state.models

    def synthesize_chw(pose: Pose, stage: str) -> np.ndarray:
        models = state.models
        with state._sem:
            img = models.gennet(pose)
            if stage == "refined":
                if models.refiner is None:
                    raise CheckpointError("no refiner checkpoint loaded")
                img = models.refiner(img)
        return img

    def parse_pose_fields(translation, quaternion):
        norm = float(np.linalg.norm(quaternion))
        if abs(norm - 1.0) > QUAT_NORM_TOL:
            return None, _error(400, f"quaternion norm {norm:.6g} outside "
                                     f"[1-{QUAT_NORM_TOL}, 1+{QUAT_NORM_TOL}]",
                                "quaternion")
        return Pose(translation=translation, rotation=quaternion), None

    @app.post(API + "/synthesize")
    def synthesize(req: SynthesisRequest):
        models = models_or_none()
        if models is None:
            return _error(503, "models not loaded yet")
        if req.stage not in ("coarse", "refined"):
            return _error(400, f"unknown stage {req.stage!r}", "stage")
        if req.format != "png":
            return _error(400, "png is the only supported format", "format")
        if req.stage == "refined" and models.refiner is None:
            return _error(400, "no refined model loaded", "stage")
        pose, err = parse_pose_fields(req.translation, req.quaternion)
        if err is not None:
            return err
        img = synthesize_chw(pose, req.stage)
        png = _png_bytes(model_to_uint8(np.transpose(img, (1, 2, 0))))
        headers = {
            "X-Pose-Translation": json.dumps(req.translation),
            "X-Pose-Quaternion": json.dumps(req.quaternion),
            "X-Stage": req.stage,
            "X-Config-Hash": models.config_hash,
        }
        return Response(content=png, media_type="image/png", headers=headers)

    @app.post(API + "/trajectory")
    def trajectory(req: TrajectoryRequest):
        models = models_or_none()
        if models is None:
            return _error(503, "models not loaded yet")
        if len(req.keyposes) < 2:
            return _error(400, "need at least 2 keyposes", "keyposes")
        if req.frames_per_segment < 1:
            return _error(400, "frames_per_segment must be >= 1", "frames_per_segment")
        keyposes = []
        for i, entry in enumerate(req.keyposes):
            try:
                t, q = entry["t"], entry["q"]
            except (KeyError, TypeError):
                return _error(400, f"keypose {i} must carry 't' and 'q'", "keyposes")
            pose, err = parse_pose_fields(t, q)
            if err is not None:
                return err
            keyposes.append(pose)
        traj = interpolate_trajectory(keyposes, req.frames_per_segment)
        job = f"job{len(state.frame_store):06d}"
        urls = []
        for i, pose in enumerate(traj.poses):
            img = synthesize_chw(pose, req.stage)
            name = f"{job}/frame_{i:05d}.png"
            state.frame_store[name] = _png_bytes(
                model_to_uint8(np.transpose(img, (1, 2, 0))))
            urls.append(f"{API}/frames/{name}")
        return {"frames": urls, "frame_count": traj.frame_count,
                "config_hash": models.config_hash}

    @app.get(API + "/frames/{job}/{name}")
    def frame(job: str, name: str):
        key = f"{job}/{name}"
        png = state.frame_store.get(key)
        if png is None:
            return _error(404, f"no frame {key!r}")
        return Response(content=png, media_type="image/png")

    @app.get(API + "/scene-info")
    def scene_info():
        models = models_or_none()
        if models is None:
            return _error(503, "models not loaded yet")
        info = {
            "scene": models.scene_name,
            "config_hash": models.config_hash,
            "image_size": models.gennet.config.output_size,
            "stages": ["coarse"] + (["refined"] if models.refiner else []),
            "nearest_available": bool(models.train_samples),
        }
        if models.train_samples:
            t = np.stack([s.pose.translation for s in models.train_samples])
            info["pose_bounds"] = {"min": t.min(axis=0).tolist(),
                                   "max": t.max(axis=0).tolist()}
        return info

    @app.get(API + "/nearest")
    def nearest(pose: str, k: int = 3):
        models = models_or_none()
        if models is None:
            return _error(503, "models not loaded yet")
        if not models.train_samples:
            return _error(400, "no training poses loaded", "pose")
        try:
            vals = [float(v) for v in pose.split(",")]
        except ValueError:
            return _error(400, "pose must be 7 comma-separated reals "
                               "(x,y,z,w,qx,qy,qz)", "pose")
        if len(vals) != 7:
            return _error(400, "pose must have exactly 7 components", "pose")
        _, err = parse_pose_fields(vals[:3], vals[3:])
        if err is not None:
            return err
        query = Pose.from_vector(vals)
        if k < 1:
            return _error(400, "k must be >= 1", "k")
        hits = nearest_poses(query, models.train_samples, k=k,
                             alpha=state.nearest_alpha)
        index_of = {id(s): i for i, s in enumerate(models.train_samples)}
        results = []
        for sample, dist in hits:
            idx = index_of[id(sample)]
            results.append({
                "t": [float(v) for v in sample.pose.translation],
                "q": [float(v) for v in sample.pose.rotation],
                "sequence_id": sample.sequence_id,
                "distance": dist,
                "thumbnail": f"{API}/thumbnails/{idx}.png"
                             if idx in models.thumbnails else None,
            })
        return {"nearest": results, "config_hash": models.config_hash}

    @app.get(API + "/thumbnails/{index}.png")
    def thumbnail(index: int):
        models = models_or_none()
        if models is None:
            return _error(503, "models not loaded yet")
        png = models.thumbnails.get(index)
        if png is None:
            return _error(404, f"no thumbnail {index}")
        return Response(content=png, media_type="image/png")

    return app


def serve_experiment(out_dir: str, host: str = "127.0.0.1", port: int = 8000,
                     stage: str = "auto", max_inflight: int = 2):
    """Load checkpoints from an experiment directory and serve over HTTP."""
    import uvicorn

    from .config import load_config
    from .pipeline import Experiment

    config = load_config(os.path.join(out_dir, "config.json")) \
        if os.path.exists(os.path.join(out_dir, "config.json")) else None
    if config is None:
        raise CheckpointError(f"no config.json under {out_dir!r}")
    exp = Experiment(config)
    stage1 = exp.load_stage_checkpoint(Experiment.STAGE1)
    refine = None
    if stage in ("auto", "refined") and \
            os.path.exists(exp.checkpoint_path(Experiment.STAGE2_PL)):
        refine = exp.load_stage_checkpoint(Experiment.STAGE2_PL)
    split = exp.load_split()
    loader = exp._loader("serve")
    models = load_models(stage1, refine, train_samples=split.train,
                         scene_name=os.path.basename(os.path.normpath(out_dir)),
                         thumbnail_loader=loader)
    state = ServiceState(models=models, max_inflight=max_inflight,
                         nearest_alpha=config.nearest_alpha)
    app = create_app(state)
    uvicorn.run(app, host=host, port=port, log_level="warning")
