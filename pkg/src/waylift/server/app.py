"""Interactive control server: sessions, stepping, snapshots, planning.

Each session owns a world-model state and a rolling context. Requests to one
session are strictly serialized: a second request while one is in flight is
rejected with 409 (the steering loop is turn-based). Connected websocket
clients receive each rollout frame as canonical JSON text the moment it is
simulated; the same canonical text is hashed into the session log so clients
can verify payload integrity end to end.
"""

from __future__ import annotations

import asyncio
import threading
from dataclasses import replace

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from ..camera import Camera, WaypointSet
from ..cem import CemConfig, cem_plan
from ..kinematics import KinematicModel, apply_action, default_model
from ..policy import PolicyConfig, PolicyContext, generate_actions
from ..world import (
    WM_CONTEXT,
    Observation,
    Scene,
    WorldModelState,
    corridor,
    generate_trajectory,
    random_room,
    wm_step,
)
from .payloads import (
    SCHEMA_ERROR,
    SCHEMA_LOG,
    SCHEMA_PLAN,
    SCHEMA_SESSION,
    SCHEMA_SNAPSHOT,
    SCHEMA_STEP,
    canonical_json,
    frame_payload,
    payload_hash,
)

_SESSION_STEP_KEY = 7  # spawn-key namespace for per-step rngs


class CreateSessionRequest(BaseModel):
    scene_id: str
    seed: int = 0
    sigma_wm: float = Field(default=0.0, ge=0.0)
    goal_noise: float = Field(default=0.0, ge=0.0)


class StepRequest(BaseModel):
    waypoints: dict[str, dict] = Field(default_factory=dict)
    sample_count: int = Field(default=1, ge=1, le=64)


class SnapshotRequest(BaseModel):
    pass


class PlanRequest(BaseModel):
    snapshot_id: str
    iters: int = Field(default=4, ge=1, le=16)
    samples: int = Field(default=32, ge=2, le=256)
    elites: int = Field(default=8, ge=1, le=64)
    space: str = Field(default="lifted-2d")
    seed: int = 0


class Session:
    def __init__(self, session_id: str, scene: Scene, seed: int, m: KinematicModel,
                 cam: Camera, sigma_wm: float, goal_noise: float):
        self.id = session_id
        self.scene = scene
        self.seed = seed
        self.model = m
        self.camera = cam
        self.policy_cfg = replace(PolicyConfig(), goal_noise_scale=goal_noise)
        self.lock = threading.Lock()
        self.step_count = 0
        self.snapshots: dict[str, Observation] = {}
        self.log: list[dict] = []
        self.history: list[dict] = []
        self.subscribers: list[asyncio.Queue] = []

        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
        traj = generate_trajectory(scene, m, rng, length=WM_CONTEXT, mix={"idle": 1.0}, camera=cam)
        self.obs_history = [o for _, o in traj]
        self.pose_history = [p for p, _ in traj]
        self.state = WorldModelState(
            scene=scene, model=m, camera=cam, pose=self.pose_history[-1],
            context=self.obs_history, sigma_wm=sigma_wm,
            rng=np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,))),
        )
        self._log_frame(self.current_frame())

    def current_frame(self) -> dict:
        return frame_payload(self.obs_history[-1], self.pose_history[-1], self.model, self.camera)

    def context(self) -> PolicyContext:
        return PolicyContext.from_history(self.obs_history, self.pose_history, self.policy_cfg.K_pi)

    def step_rng(self, step: int, sample: int = 0) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(_SESSION_STEP_KEY, step, sample))
        )

    def _log_frame(self, frame: dict) -> str:
        digest = payload_hash(frame)
        self.log.append({"t": frame["t"], "hash": digest})
        return digest


def _busy_response() -> JSONResponse:
    return JSONResponse(
        status_code=409,
        content={"schema": SCHEMA_ERROR, "error": "busy", "detail": "one operation per session"},
    )


def default_scenes() -> dict[str, Scene]:
    scenes = {}
    for s in range(2):
        scene = random_room(seed=s, scene_id=f"room-{s}")
        scenes[scene.scene_id] = scene
    c = corridor(seed=0, scene_id="corridor-0")
    scenes[c.scene_id] = c
    return scenes


def create_app(
    scenes: dict[str, Scene] | None = None,
    m: KinematicModel | None = None,
    cam: Camera | None = None,
) -> FastAPI:
    app = FastAPI(title="waylift control server")
    app.state.scenes = scenes or default_scenes()
    app.state.model = m or default_model()
    app.state.camera = cam or Camera()
    app.state.sessions = {}
    app.state.counter = 0

    def get_session(session_id: str) -> Session:
        session = app.state.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    async def broadcast(session: Session, text: str) -> None:
        for queue in list(session.subscribers):
            await queue.put(text)

    @app.post("/sessions")
    async def create_session(req: CreateSessionRequest):
        scene = app.state.scenes.get(req.scene_id)
        if scene is None:
            raise HTTPException(status_code=404, detail=f"unknown scene {req.scene_id}")
        app.state.counter += 1
        session = Session(
            session_id=f"s-{app.state.counter:04d}",
            scene=scene,
            seed=req.seed,
            m=app.state.model,
            cam=app.state.camera,
            sigma_wm=req.sigma_wm,
            goal_noise=req.goal_noise,
        )
        app.state.sessions[session.id] = session
        return {
            "schema": SCHEMA_SESSION,
            "session_id": session.id,
            "scene_id": scene.scene_id,
            "seed": req.seed,
            "context_len": len(session.obs_history),
            "frame": session.current_frame(),
        }

    @app.get("/sessions/{session_id}/frame")
    async def get_frame(session_id: str):
        return get_session(session_id).current_frame()

    @app.get("/sessions/{session_id}/log")
    async def get_log(session_id: str):
        session = get_session(session_id)
        return {"schema": SCHEMA_LOG, "entries": list(session.log)}

    @app.post("/sessions/{session_id}/step")
    async def step_session(session_id: str, req: StepRequest):
        session = get_session(session_id)
        try:
            ws = WaypointSet.from_json(canonical_json(req.waypoints))
        except (ValueError, KeyError) as exc:
            raise HTTPException(status_code=422, detail=f"invalid waypoints: {exc}")
        if not session.lock.acquire(blocking=False):
            return _busy_response()
        try:
            step_idx = session.step_count
            ctx = session.context()
            m, cam, pcfg = session.model, session.camera, session.policy_cfg

            # Mirrors one link of the offline rollout chain: the rng splits
            # into (simulator stream, policy stream) in that order.
            rng = session.step_rng(step_idx, 0)
            sim_rng, policy_master = rng.spawn(2)
            policy_rng = policy_master.spawn(1)[0]
            actions = generate_actions(ctx, ws, m, cam, pcfg, policy_rng)
            sim = session.state.clone(rng=sim_rng)

            frames = []
            pose = session.pose_history[-1]
            new_obs, new_poses = [], []
            for a in actions:
                obs = wm_step(sim, a)
                pose = apply_action(pose, a)
                frame = frame_payload(obs, pose, m, cam)
                session._log_frame(frame)
                await broadcast(session, canonical_json(frame))
                frames.append(frame)
                new_obs.append(obs)
                new_poses.append(pose)

            diagnostics = None
            if req.sample_count > 1:
                finals = [new_poses[-1].pelvis_position]
                for j in range(1, req.sample_count):
                    rng_j = session.step_rng(step_idx, j)
                    _, pm_j = rng_j.spawn(2)
                    acts_j = generate_actions(ctx, ws, m, cam, pcfg, pm_j.spawn(1)[0])
                    p_j = session.pose_history[-1]
                    for a in acts_j:
                        p_j = apply_action(p_j, a)
                    finals.append(p_j.pelvis_position)
                spread = np.std(np.array(finals), axis=0)
                diagnostics = {
                    "samples": req.sample_count,
                    "final_pelvis_std_m": [float(x) for x in spread],
                }

            # Commit
            session.state = sim
            session.obs_history.extend(new_obs)
            session.pose_history.extend(new_poses)
            session.step_count += 1
            session.history.append({"waypoints": req.waypoints, "t_end": frames[-1]["t"]})

            return {
                "schema": SCHEMA_STEP,
                "frames": frames,
                "frame_hashes": [payload_hash(f) for f in frames],
                "waypoints_echo": canonical_json(req.waypoints),
                "diagnostics": diagnostics,
            }
        finally:
            session.lock.release()

    @app.post("/sessions/{session_id}/snapshot")
    async def snapshot_session(session_id: str):
        session = get_session(session_id)
        if not session.lock.acquire(blocking=False):
            return _busy_response()
        try:
            snap_id = f"snap-{len(session.snapshots):03d}"
            session.snapshots[snap_id] = session.obs_history[-1]
            return {
                "schema": SCHEMA_SNAPSHOT,
                "snapshot_id": snap_id,
                "t": int(session.obs_history[-1].t),
                "frame_hash": payload_hash(session.current_frame()),
            }
        finally:
            session.lock.release()

    @app.post("/sessions/{session_id}/plan")
    async def plan_session(session_id: str, req: PlanRequest):
        session = get_session(session_id)
        goal = session.snapshots.get(req.snapshot_id)
        if goal is None:
            raise HTTPException(status_code=404, detail=f"unknown snapshot {req.snapshot_id}")
        if not session.lock.acquire(blocking=False):
            return _busy_response()
        try:
            m, cam = session.model, session.camera
            cem_cfg = CemConfig(
                iterations=req.iters,
                samples=req.samples,
                elites=min(req.elites, req.samples),
                space=req.space,
                horizon=1 if req.space != "low-level" else 8,
                seed=req.seed,
            )
            plan = cem_plan(
                session.state, session.context(), goal, cem_cfg, m, cam, session.policy_cfg
            )
            # Preview: noiseless replay of the winning actions from the
            # current pose; nothing is committed.
            preview = session.state.clone(rng=np.random.default_rng(0))
            preview.sigma_wm = 0.0
            frames = []
            pose = session.pose_history[-1]
            for a in plan.best_actions:
                obs = wm_step(preview, a)
                pose = apply_action(pose, a)
                frames.append(frame_payload(obs, pose, m, cam))
            waypoints = None
            if plan.best_hl is not None:
                import json as _json

                waypoints = _json.loads(plan.best_hl[0].to_json())
            return {
                "schema": SCHEMA_PLAN,
                "snapshot_id": req.snapshot_id,
                "cost": plan.best_cost,
                "cost_history": plan.cost_history,
                "waypoints": waypoints,
                "frames": frames,
                "frame_hashes": [payload_hash(f) for f in frames],
            }
        finally:
            session.lock.release()

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        session = app.state.sessions.get(session_id)
        if session is None:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        queue: asyncio.Queue = asyncio.Queue()
        session.subscribers.append(queue)
        try:
            while True:
                text = await queue.get()
                await websocket.send_text(text)
        except WebSocketDisconnect:
            pass
        finally:
            if queue in session.subscribers:
                session.subscribers.remove(queue)

    return app
