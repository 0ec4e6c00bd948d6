"""Synthetic scenes, the egocentric observation renderer, and the simulated
low-level world model.

Observations are sparse: the normalized image coordinates of whichever scene
landmarks fall inside the head camera's frustum. The world model keeps a
hidden true pose, advances it with ``apply_action`` (plus optional process
noise standing in for prediction error of a learned model), and exposes only
observations through the planning interface.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .camera import Camera, camera_pose_of, project_points
from .kinematics import (
    NUM_JOINTS,
    Action,
    KinematicModel,
    Pose,
    action_between,
    apply_action,
)

WM_CONTEXT = 8  # observation context ring capacity


@dataclass(frozen=True)
class Scene:
    """Landmark cloud inside an axis-aligned box; ids are unique ints."""

    scene_id: str
    landmark_ids: np.ndarray  # (N,) int
    landmark_positions: np.ndarray  # (N, 3) meters
    bounds_min: np.ndarray  # (3,)
    bounds_max: np.ndarray  # (3,)

    def __post_init__(self):
        ids = np.array(self.landmark_ids, dtype=int)
        pos = np.array(self.landmark_positions, dtype=float)
        lo = np.array(self.bounds_min, dtype=float)
        hi = np.array(self.bounds_max, dtype=float)
        if len(np.unique(ids)) != len(ids):
            raise ValueError("landmark ids must be unique")
        if len(ids) < 8:
            raise ValueError("a scene needs at least 8 landmarks")
        if pos.shape != (len(ids), 3):
            raise ValueError("landmark positions must be (N, 3)")
        order = np.argsort(ids)
        ids = ids[order]
        pos = pos[order]
        if not np.all(hi > lo):
            raise ValueError("bounds box must have positive extent")
        for a in (ids, pos, lo, hi):
            a.flags.writeable = False
        object.__setattr__(self, "landmark_ids", ids)
        object.__setattr__(self, "landmark_positions", pos)
        object.__setattr__(self, "bounds_min", lo)
        object.__setattr__(self, "bounds_max", hi)

    def to_json(self) -> str:
        doc = {
            "id": self.scene_id,
            "landmarks": [
                {"id": int(i), "p": [float(x) for x in p]}
                for i, p in zip(self.landmark_ids, self.landmark_positions)
            ],
            "bounds": {
                "min": [float(x) for x in self.bounds_min],
                "max": [float(x) for x in self.bounds_max],
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        doc = json.loads(text)
        return cls(
            scene_id=doc["id"],
            landmark_ids=np.array([e["id"] for e in doc["landmarks"]], dtype=int),
            landmark_positions=np.array([e["p"] for e in doc["landmarks"]], dtype=float),
            bounds_min=np.array(doc["bounds"]["min"], dtype=float),
            bounds_max=np.array(doc["bounds"]["max"], dtype=float),
        )


@dataclass(frozen=True)
class Observation:
    """Visible landmark projections at one timestep, sorted by landmark id."""

    ids: np.ndarray  # (n,) int
    uv: np.ndarray  # (n, 2) in [-0.5, 0.5]^2
    t: int

    def __post_init__(self):
        ids = np.array(self.ids, dtype=int)
        uv = np.array(self.uv, dtype=float).reshape(len(ids), 2)
        order = np.argsort(ids)
        ids = ids[order]
        uv = uv[order]
        if len(np.unique(ids)) != len(ids):
            raise ValueError("landmark ids must be unique within an observation")
        if len(ids) and np.abs(uv).max() > 0.5 + 1e-12:
            raise ValueError("observation uv outside image bounds")
        ids.flags.writeable = False
        uv.flags.writeable = False
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "uv", uv)

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def _make(cls, ids: np.ndarray, uv: np.ndarray, t: int) -> "Observation":
        # Internal: trusts sorted unique ids and in-bounds uv.
        out = object.__new__(cls)
        ids.flags.writeable = False
        uv.flags.writeable = False
        object.__setattr__(out, "ids", ids)
        object.__setattr__(out, "uv", uv)
        object.__setattr__(out, "t", t)
        return out


def render_observation(p: Pose, scene: Scene, m: KinematicModel, cam: Camera, t: int = 0) -> Observation:
    """Deterministic sparse rendering: all landmarks visible from the head camera."""
    cam_pose = camera_pose_of(p, m, cam)
    uv, visible, _ = project_points(scene.landmark_positions, cam_pose, cam)
    return Observation._make(scene.landmark_ids[visible], uv[visible], t)


class WorldModelState:
    """Simulator state behind the observation-in / observation-out interface.

    The hidden true pose is simulator-internal: planners only ever see the
    observation context ring (capacity ``WM_CONTEXT``). States are cheap to
    clone so a planner can fan out many rollouts from one root.
    """

    def __init__(
        self,
        scene: Scene,
        model: KinematicModel,
        camera: Camera,
        pose: Pose,
        context: list[Observation] | None = None,
        sigma_wm: float = 0.0,
        rng: np.random.Generator | None = None,
    ):
        if sigma_wm < 0:
            raise ValueError("sigma_wm must be >= 0")
        self.scene = scene
        self.model = model
        self.camera = camera
        self.sigma_wm = float(sigma_wm)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._true_pose = pose
        context = list(context) if context else []
        self._context: list[Observation] = context[-WM_CONTEXT:]
        if not self._context:
            self._context = [render_observation(pose, scene, model, camera, t=0)]

    @property
    def context(self) -> tuple[Observation, ...]:
        return tuple(self._context)

    @property
    def latest(self) -> Observation:
        return self._context[-1]

    def clone(self, rng: np.random.Generator | None = None) -> "WorldModelState":
        out = WorldModelState.__new__(WorldModelState)
        out.scene = self.scene
        out.model = self.model
        out.camera = self.camera
        out.sigma_wm = self.sigma_wm
        out.rng = rng if rng is not None else copy.deepcopy(self.rng)
        out._true_pose = self._true_pose
        out._context = list(self._context)
        return out


def wm_step(state: WorldModelState, a: Action) -> Observation:
    """Advance the hidden pose by one action and render the next observation.

    With ``sigma_wm > 0`` a zero-mean Gaussian perturbation of that scale is
    added to the integrated pose (positions in meters, angles in radians).
    Invalid actions raise and leave the state unchanged.
    """
    if not isinstance(a, Action):
        raise ValueError("wm_step expects an Action")
    pose = apply_action(state._true_pose, a)
    if state.sigma_wm > 0.0:
        noise = state.rng.normal(0.0, state.sigma_wm, size=3 + 3 * NUM_JOINTS)
        pose = Pose._make(
            pose.pelvis_position + noise[:3],
            pose.joint_angles + noise[3:].reshape(NUM_JOINTS, 3),
        )
    obs = render_observation(pose, state.scene, state.model, state.camera, t=state.latest.t + 1)
    state._true_pose = pose
    state._context.append(obs)
    if len(state._context) > WM_CONTEXT:
        del state._context[: len(state._context) - WM_CONTEXT]
    return obs


# ---------------------------------------------------------------------------
# Scene generation

def random_room(seed: int, scene_id: str | None = None, n_landmarks: int = 96,
                size=(6.0, 6.0, 2.5)) -> Scene:
    """Landmarks sampled uniformly in a centered size[0] x size[1] x size[2] room."""
    rng = np.random.default_rng(seed)
    lo = np.array([-size[0] / 2, -size[1] / 2, 0.0])
    hi = np.array([size[0] / 2, size[1] / 2, size[2]])
    pos = rng.uniform(lo, hi, size=(n_landmarks, 3))
    return Scene(
        scene_id=scene_id or f"room-{seed}",
        landmark_ids=np.arange(n_landmarks),
        landmark_positions=pos,
        bounds_min=lo,
        bounds_max=hi,
    )


def corridor(seed: int = 0, scene_id: str | None = None, length: float = 12.0,
             width: float = 2.0, height: float = 2.5, n_per_wall: int = 24) -> Scene:
    """Long straight room with landmarks pinned to both side walls."""
    rng = np.random.default_rng(seed)
    xs = np.linspace(-length / 2 + 0.5, length / 2 - 0.5, n_per_wall)
    left = np.stack([xs, np.full_like(xs, width / 2), rng.uniform(0.5, height - 0.5, n_per_wall)], axis=1)
    right = np.stack([xs, np.full_like(xs, -width / 2), rng.uniform(0.5, height - 0.5, n_per_wall)], axis=1)
    end = np.array([[length / 2 - 0.2, 0.0, height / 2], [length / 2 - 0.2, width / 4, height / 2]])
    pos = np.concatenate([left, right, end])
    return Scene(
        scene_id=scene_id or f"corridor-{seed}",
        landmark_ids=np.arange(len(pos)),
        landmark_positions=pos,
        bounds_min=np.array([-length / 2, -width / 2, 0.0]),
        bounds_max=np.array([length / 2, width / 2, height]),
    )


# ---------------------------------------------------------------------------
# Scripted ground-truth motion

DEFAULT_MIX = {"walk": 0.5, "turn": 0.15, "reach": 0.2, "idle": 0.15}

# Per-step limits of the motion generator (steps are 0.25 s at the 4 Hz
# sampling convention): pelvis travel and per-joint angle change.
MAX_PELVIS_STEP = 0.25
MAX_JOINT_STEP = 0.4

_PELVIS_HEIGHT = 1.0
_ARM_JOINTS = ("R_UpperArm", "R_Forearm", "R_Hand", "L_UpperArm", "L_Forearm", "L_Hand")


def standing_pose(xy, yaw: float) -> Pose:
    """Upright T-pose at the given floor position and heading."""
    angles = np.zeros((NUM_JOINTS, 3))
    angles[0, 0] = yaw
    return Pose(
        pelvis_position=np.array([xy[0], xy[1], _PELVIS_HEIGHT]),
        joint_angles=angles,
    )


def generate_trajectory(
    scene: Scene,
    m: KinematicModel,
    rng: np.random.Generator,
    length: int,
    mix: dict[str, float] | None = None,
    camera: Camera | None = None,
    start: Pose | None = None,
) -> list[tuple[Pose, Observation]]:
    """Scripted smooth motion built from walk / turn / reach / idle primitives.

    Consecutive poses always respect the per-step limits and the pelvis stays
    inside the scene bounds. Returns ``length`` (pose, observation) pairs.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    mix = dict(mix or DEFAULT_MIX)
    total = sum(mix.values())
    if total <= 0:
        raise ValueError("primitive mix must have positive total weight")
    names = sorted(mix)
    weights = np.array([mix[n] for n in names]) / total
    camera = camera or Camera()

    margin = 0.6
    lo = scene.bounds_min[:2] + margin
    hi = scene.bounds_max[:2] - margin
    if not np.all(hi > lo):
        raise ValueError("scene bounds too small for trajectory generation")

    if start is None:
        xy = rng.uniform(lo + 0.2, hi - 0.2)
        pose = standing_pose(xy, yaw=rng.uniform(-np.pi, np.pi))
    else:
        pose = start

    out: list[tuple[Pose, Observation]] = []
    t = 0
    arm_rows = [m.joint_index[j] for j in _ARM_JOINTS]

    def record(p: Pose):
        nonlocal t
        out.append((p, render_observation(p, scene, m, camera, t=t)))
        t += 1

    record(pose)
    while len(out) < length:
        primitive = names[int(rng.choice(len(names), p=weights))]
        seg = int(rng.integers(6, 16))
        seg = min(seg, length - len(out))
        if primitive == "walk":
            pose = _walk_segment(pose, seg, rng, lo, hi, record)
        elif primitive == "turn":
            pose = _turn_segment(pose, seg, rng, record)
        elif primitive == "reach":
            pose = _reach_segment(pose, seg, rng, arm_rows, record)
        else:
            pose = _idle_segment(pose, seg, rng, arm_rows, record)
    return out[:length]


def _steer_limit(pose: Pose, lo, hi, heading: float, rng) -> float:
    """Turn the heading toward the room center when close to the walls."""
    xy = pose.pelvis_position[:2]
    near = (xy < lo + 0.4) | (xy > hi - 0.4)
    if not near.any():
        return heading
    center = (lo + hi) / 2
    want = float(np.arctan2(center[1] - xy[1], center[0] - xy[0]))
    diff = (want - heading + np.pi) % (2 * np.pi) - np.pi
    return heading + float(np.clip(diff, -0.22, 0.22))


def _walk_segment(pose, steps, rng, lo, hi, record):
    heading = float(pose.joint_angles[0, 0])
    speed = rng.uniform(0.10, 0.18)
    phase = rng.uniform(0, 2 * np.pi)
    for k in range(steps):
        heading = _steer_limit(pose, lo, hi, heading, rng)
        heading += float(rng.normal(0.0, 0.02))
        step = np.array([np.cos(heading), np.sin(heading), 0.0]) * speed
        xy = np.clip(pose.pelvis_position[:2] + step[:2], lo, hi)
        angles = pose.joint_angles.copy()
        angles[0, 0] = heading
        # arm swing, opposite phase left/right
        swing = 0.12 * np.sin(phase + 0.9 * k)
        angles[8, 0] = swing
        angles[12, 0] = -swing
        pose = Pose(np.array([xy[0], xy[1], _PELVIS_HEIGHT]), angles)
        record(pose)
    return pose


def _turn_segment(pose, steps, rng, record):
    rate = float(rng.uniform(0.05, 0.2)) * (1 if rng.random() < 0.5 else -1)
    for _ in range(steps):
        angles = pose.joint_angles.copy()
        angles[0, 0] = angles[0, 0] + rate
        pose = Pose(pose.pelvis_position, angles)
        record(pose)
    return pose


def _reach_segment(pose, steps, rng, arm_rows, record):
    # Drive one arm toward a sampled reach posture, then partially back.
    # Per-component clip of 0.18 keeps the per-step relative rotation well
    # inside the 0.4 rad joint limit even when all three axes move at once.
    side = rng.choice([0, 1])  # 0 = right arm rows, 1 = left
    rows = arm_rows[:3] if side == 0 else arm_rows[3:]
    target = rng.uniform(-0.9, 0.9, size=(3, 3))
    base = pose.joint_angles[rows].copy()
    for k in range(steps):
        frac = np.sin(np.pi * (k + 1) / (steps + 1))  # out and back
        angles = pose.joint_angles.copy()
        goal = base + frac * (target - base)
        step = np.clip(goal - angles[rows], -0.18, 0.18)
        angles[rows] = angles[rows] + step
        pose = Pose(pose.pelvis_position, angles)
        record(pose)
    return pose


def _idle_segment(pose, steps, rng, arm_rows, record):
    base = pose.joint_angles.copy()
    for _ in range(steps):
        angles = pose.joint_angles + rng.normal(0.0, 0.01, size=pose.joint_angles.shape)
        angles = np.clip(angles, base - 0.06, base + 0.06)
        angles[0, 0] = base[0, 0]  # hold heading
        pose = Pose(pose.pelvis_position, angles)
        record(pose)
    return pose


def trajectory_actions(traj: list[tuple[Pose, Observation]]) -> list[Action]:
    """Consecutive-pose actions of a generated trajectory."""
    return [action_between(a[0], b[0]) for a, b in zip(traj[:-1], traj[1:])]


def save_trajectory(traj: list[tuple[Pose, Observation]], path) -> None:
    """JSON-lines: one record per step with the flat pose and the feature list."""
    with open(path, "w", encoding="utf-8") as fh:
        for pose, obs in traj:
            rec = {
                "pose": [float(x) for x in pose.flatten()],
                "features": [
                    {"id": int(i), "u": float(u), "v": float(v)}
                    for i, (u, v) in zip(obs.ids, obs.uv)
                ],
                "t": int(obs.t),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_trajectory(path) -> list[tuple[Pose, Observation]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            pose = Pose.from_flat(np.array(rec["pose"]))
            obs = Observation(
                ids=np.array([f["id"] for f in rec["features"]], dtype=int),
                uv=np.array([[f["u"], f["v"]] for f in rec["features"]], dtype=float).reshape(-1, 2),
                t=int(rec["t"]),
            )
            out.append((pose, obs))
    return out
