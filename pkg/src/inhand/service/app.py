"""FastAPI wrapper around the tracking engine.

The service is stateless except for live tracking sessions, which are held
in process memory. Heavy batch work (experiments) writes metrics files on
the server side, so running the app in process via an ASGI transport keeps
file outputs local.
"""
from __future__ import annotations

import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..geometry import Pose2
from ..harness import (ExperimentSpec, ObservationNoise, TrackerVariant,
                       default_ground_truth, default_tracker_config,
                       load_results, load_trajectory, run_experiment, run_one,
                       script_trajectory, summarize, TrajectoryRejected)
from ..harness.trajectory import (TrajectoryRecord, dumps_trajectory,
                                  loads_trajectory)
from ..physics import (ControlCommand, Observation, PhysicsError, SceneSpec,
                       WorldState, default_scene, load_scene)
from ..physics.engine import resting_pose
from ..tracker import Tracker
from . import schemas as S


def _pose_to_model(p: Pose2) -> S.PoseModel:
    return S.PoseModel(angle=float(p.angle),
                       translation=(float(p.translation[0]),
                                    float(p.translation[1])))


def _pose_from_model(m: S.PoseModel) -> Pose2:
    return Pose2(m.angle, np.asarray(m.translation, dtype=np.float64))


def _state_from_model(m: S.StateModel) -> WorldState:
    return WorldState(np.asarray(m.joint_positions),
                      np.asarray(m.joint_velocities),
                      _pose_from_model(m.object_pose),
                      np.asarray(m.object_velocity))


def _variant_from_model(m: S.VariantModel) -> TrackerVariant:
    try:
        return TrackerVariant(
            name=m.name, optimizer=m.optimizer, regime=m.regime,
            num_lanes=m.num_lanes, window=m.window,
            exploration_scale=m.exploration_scale,
            theta_prior_scale=m.theta_prior_scale,
            contacts_off=m.contacts_off, slip_off=m.slip_off)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def _scene_for(name: str, scene_path: str | None = None) -> SceneSpec:
    if scene_path:
        try:
            return load_scene(scene_path)
        except (OSError, ValueError, KeyError) as exc:
            raise HTTPException(status_code=400,
                                detail=f"cannot load scene: {exc}") from exc
    try:
        return default_scene(name)
    except KeyError as exc:
        raise HTTPException(status_code=422,
                            detail=f"unknown object {name!r}") from exc


def _noise_from(req_noise: S.NoiseModel | None, zero: bool) -> ObservationNoise:
    if zero:
        return ObservationNoise.zero()
    if req_noise is None:
        return ObservationNoise()
    return ObservationNoise(**req_noise.model_dump())


def _record_for_spec(spec: S.TrajectorySpec) -> tuple[str, SceneSpec, TrajectoryRecord]:
    label = spec.resolved_label()
    scene = default_scene(spec.object)
    if spec.jsonl:
        record = loads_trajectory(spec.jsonl)
        record.validate_scene(scene)
        return label, scene, record
    if spec.path:
        record = load_trajectory(spec.path)
        record.validate_scene(scene)
        return label, scene, record
    gt = default_ground_truth(scene,
                              noise=_noise_from(None, spec.zero_noise))
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=spec.seed, spawn_key=(8,)))
    record = script_trajectory(spec.kind, scene, gt, rng, ticks=spec.ticks)
    return label, scene, record


def _summary_models(rows) -> list[S.SummaryRowModel]:
    return [S.SummaryRowModel(**row) for row in rows]


def _ablate_config(cfg: S.ExperimentConfigModel,
                   axis: str) -> list[S.ExperimentConfigModel]:
    """Declarative mirror of harness.ablate over experiment configs."""
    def sub(leaf: str) -> str | None:
        return None if cfg.out is None else str(Path(cfg.out) / leaf)

    if axis == "exploration":
        out = []
        for level, scale in (("low", 0.1), ("med", 1.0), ("high", 10.0)):
            variants = [v.model_copy(update={
                "name": f"{v.name}-explore-{level}",
                "exploration_scale": v.exploration_scale * scale,
            }) for v in cfg.variants]
            out.append(cfg.model_copy(update={
                "variants": variants, "out": sub(f"explore-{level}")}))
        return out
    if axis == "K":
        out = []
        for k in (1, 10, 40, 100):
            variants = [v.model_copy(update={
                "name": f"{v.name}-K{k}", "num_lanes": k}) for v in cfg.variants]
            out.append(cfg.model_copy(update={
                "variants": variants, "out": sub(f"K{k}")}))
        return out
    if axis == "contacts_off":
        variants = [v.model_copy(update={
            "name": f"{v.name}-nocontact", "contacts_off": True})
            for v in cfg.variants]
        return [cfg.model_copy(update={
            "variants": variants, "out": sub("contacts-off")})]
    if axis == "slip_off":
        variants = [v.model_copy(update={
            "name": f"{v.name}-noslip", "slip_off": True})
            for v in cfg.variants]
        return [cfg.model_copy(update={
            "variants": variants, "out": sub("slip-off")})]
    raise HTTPException(status_code=422, detail=f"unknown ablation axis {axis!r}")


class _Session:
    def __init__(self, tracker: Tracker, scene: SceneSpec):
        self.tracker = tracker
        self.scene = scene
        self.lock = threading.Lock()


def create_app() -> FastAPI:
    app = FastAPI(title="inhand", version=__version__)
    sessions: dict[str, _Session] = {}
    sessions_lock = threading.Lock()

    @app.get("/health", response_model=S.HealthResponse)
    def health():
        return S.HealthResponse(status="ok", version=__version__)

    @app.post("/record", response_model=S.RecordResponse)
    def record(req: S.RecordRequest):
        scene = _scene_for(req.object)
        gt = default_ground_truth(scene, mass_scale=req.mass_scale,
                                  friction_scale=req.friction_scale,
                                  noise=_noise_from(req.noise, req.zero_noise))
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=req.seed, spawn_key=(8,)))
        try:
            rec = script_trajectory(req.kind, scene, gt, rng, ticks=req.ticks)
        except TrajectoryRejected as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        jsonl = dumps_trajectory(rec)
        return S.RecordResponse(kind=req.kind, object=req.object,
                                num_ticks=len(rec), net_rotation=rec.net_rotation(),
                                scene_hash=rec.scene_hash, jsonl=jsonl)

    @app.post("/track", response_model=S.TrackResponse)
    def track(req: S.TrackRequest):
        try:
            label, scene, rec = _record_for_spec(req.trajectory)
        except (OSError, ValueError, TrajectoryRejected) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        variant = _variant_from_model(req.variant)
        res = run_one(scene, rec, variant, req.seed, label=label, jobs=req.jobs)
        return S.TrackResponse(
            trajectory=res.trajectory, variant=res.variant, seed=res.seed,
            num_ticks=len(res.add_series), mean_add=res.mean_add,
            std_add=res.std_add, max_add=res.max_add, final_add=res.final_add,
            diverged=res.diverged,
            series=[float(v) for v in res.add_series] if req.include_series else None)

    @app.post("/experiment", response_model=S.ExperimentResponse)
    def experiment(cfg: S.ExperimentConfigModel):
        try:
            trajectories = tuple(_record_for_spec(t) for t in cfg.trajectories)
            spec = ExperimentSpec(
                trajectories=trajectories,
                variants=tuple(_variant_from_model(v) for v in cfg.variants),
                seeds=tuple(cfg.seeds),
                output_dir=None if cfg.out is None else Path(cfg.out),
                jobs=cfg.jobs)
        except (OSError, ValueError, TrajectoryRejected) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        try:
            results = run_experiment(spec)
        except (PhysicsError, RuntimeError, ValueError) as exc:
            raise HTTPException(status_code=500,
                                detail=f"experiment cell failed: {exc}") from exc
        files = []
        if spec.output_dir is not None:
            files = [str(p) for p in sorted(Path(spec.output_dir).rglob("*.csv"))]
        return S.ExperimentResponse(rows=_summary_models(summarize(results)),
                                    files=files, num_runs=len(results))

    @app.post("/ablate", response_model=S.AblateResponse)
    def ablate_endpoint(req: S.AblateRequest):
        return S.AblateResponse(configs=_ablate_config(req.config, req.axis))

    @app.post("/report", response_model=S.ReportResponse)
    def report(req: S.ReportRequest):
        try:
            results = load_results(req.out)
        except (OSError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return S.ReportResponse(rows=_summary_models(summarize(results)))

    @app.post("/sessions", response_model=S.CreateSessionResponse)
    def create_session(req: S.CreateSessionRequest):
        scene = _scene_for(req.object, req.scene_path)
        variant = _variant_from_model(req.variant)
        cfg = default_tracker_config(scene, variant, seed=req.seed)
        if req.initial_state is not None:
            state = _state_from_model(req.initial_state)
        else:
            state = WorldState(scene.gripper.home_joints.copy(), np.zeros(4),
                               resting_pose(scene), np.zeros(3))
        estimate = (state.object_pose if req.initial_pose_estimate is None
                    else _pose_from_model(req.initial_pose_estimate))
        try:
            tracker = Tracker(scene, cfg, state, estimate)
        except (RuntimeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        sid = uuid.uuid4().hex
        with sessions_lock:
            sessions[sid] = _Session(tracker, scene)
        return S.CreateSessionResponse(session_id=sid, num_lanes=cfg.num_lanes,
                                       scene_hash=scene.content_hash())

    def _session(sid: str) -> _Session:
        with sessions_lock:
            sess = sessions.get(sid)
        if sess is None:
            raise HTTPException(status_code=404, detail="no such session")
        return sess

    @app.post("/sessions/{sid}/tick", response_model=S.TickResponse)
    def session_tick(sid: str, req: S.TickRequest):
        sess = _session(sid)
        try:
            obs = Observation.from_dict(req.observation.model_dump())
            cmd = ControlCommand(np.asarray(req.control, dtype=np.float64))
        except (ValueError, TypeError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        with sess.lock:
            out = sess.tracker.tick(cmd, obs)
            diverged = sess.tracker.diverged_count()
        return S.TickResponse(tick=out.tick, best_lane=out.best_lane,
                              pose=_pose_to_model(out.pose), updated=out.updated,
                              eta_star=out.eta_star, diverged=diverged)

    @app.get("/sessions/{sid}/estimate", response_model=S.EstimateResponse)
    def session_estimate(sid: str):
        sess = _session(sid)
        with sess.lock:
            try:
                pose = sess.tracker.current_estimate()
            except RuntimeError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            tick = sess.tracker.tick_index
        return S.EstimateResponse(tick=tick, pose=_pose_to_model(pose))

    @app.delete("/sessions/{sid}")
    def delete_session(sid: str):
        with sessions_lock:
            if sessions.pop(sid, None) is None:
                raise HTTPException(status_code=404, detail="no such session")
        return {"deleted": sid}

    return app
