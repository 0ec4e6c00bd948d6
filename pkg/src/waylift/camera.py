"""Head-mounted pinhole camera, waypoints, and goal-pose waypoint construction.

Image coordinates are normalized with bounds [-0.5, 0.5] x [-0.5, 0.5],
+u right and +v down, origin at the optical axis. The camera frame is the
usual pinhole frame: +Z along the optical axis, +X right, +Y down.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .kinematics import (
    LEAF_JOINTS,
    LEAF_TO_SKELETON,
    KinematicModel,
    Pose,
    fk_transforms,
    forward_kinematics,
)

IMAGE_BOUND = 0.5

# Head frame (X forward, Y left, Z up) to camera frame (X right, Y down,
# Z forward): columns are the camera axes expressed in the head frame.
_HEAD_TO_CAMERA_R = np.array(
    [
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
    ]
)

DEFAULT_CAMERA_PITCH = 0.3  # rad, downward


def head_mount(pitch: float = DEFAULT_CAMERA_PITCH, forward: float = 0.08) -> "RigidTransform":
    """Default camera mount: ``forward`` meters along the head axis, optical
    axis pitched ``pitch`` radians below the head's forward direction (an
    egocentric camera mostly looks at the workspace, not the horizon)."""
    c, s = np.cos(pitch), np.sin(pitch)
    # Rotation about the camera x axis that sends the optical axis toward
    # +y (down, in camera coordinates).
    pitch_down = np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])
    return RigidTransform(_HEAD_TO_CAMERA_R @ pitch_down, np.array([forward, 0.0, 0.0]))


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation; maps local points into the parent frame."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float)
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            rotation=self.rotation @ other.rotation,
            translation=self.rotation @ other.translation + self.translation,
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def inverse_apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return (points - self.translation) @ self.rotation


@dataclass(frozen=True)
class Camera:
    """Pinhole intrinsics + rigid mount from the Head joint to the camera.

    ``focal`` is in normalized image units per meter at unit depth; the
    principal point is fixed at (0, 0). Defaults give roughly a 90 degree
    horizontal field of view with the camera 8 cm forward of the head joint.
    """

    focal: float = 0.5
    near_plane: float = 0.05
    head_offset: RigidTransform = field(default_factory=head_mount)

    def __post_init__(self):
        if not (self.focal > 0.0):
            raise ValueError("focal must be positive")
        if not (self.near_plane > 0.0):
            raise ValueError("near_plane must be positive")


@dataclass(frozen=True)
class Waypoint:
    """Near-term image-space goal for one leaf joint; depth is optional (m)."""

    joint: str
    u: float
    v: float
    depth: float | None = None

    def __post_init__(self):
        if self.joint not in LEAF_JOINTS:
            raise ValueError(f"unknown leaf joint {self.joint!r}")
        if not (abs(self.u) <= IMAGE_BOUND and abs(self.v) <= IMAGE_BOUND):
            raise ValueError(f"waypoint uv ({self.u}, {self.v}) outside image bounds")
        if self.depth is not None and not (self.depth > 0.0):
            raise ValueError("waypoint depth must be positive when present")

    @property
    def uv(self) -> np.ndarray:
        return np.array([self.u, self.v])


@dataclass(frozen=True)
class WaypointSet:
    """Up to four optional waypoints; an absent entry is masked or out of frame.

    The fully-empty set is legal and means unconditioned generation.
    """

    entries: dict[str, Waypoint] = field(default_factory=dict)

    def __post_init__(self):
        for name, wp in self.entries.items():
            if name not in LEAF_JOINTS:
                raise ValueError(f"unknown leaf joint {name!r}")
            if wp.joint != name:
                raise ValueError(f"waypoint joint {wp.joint!r} filed under {name!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, joint: str) -> Waypoint | None:
        return self.entries.get(joint)

    def is_empty(self) -> bool:
        return not self.entries

    def flatten(self, include_depth: bool = False) -> np.ndarray:
        """Flatten a full set to 8 scalars (12 with depth); partial sets raise."""
        if set(self.entries) != set(LEAF_JOINTS):
            raise ValueError("flatten requires a waypoint for every leaf joint")
        values = []
        for name in LEAF_JOINTS:
            wp = self.entries[name]
            values.extend([wp.u, wp.v])
            if include_depth:
                if wp.depth is None:
                    raise ValueError(f"waypoint {name} has no depth")
                values.append(wp.depth)
        return np.array(values)

    def to_json(self) -> str:
        doc = {}
        for name in LEAF_JOINTS:
            wp = self.entries.get(name)
            if wp is None:
                continue
            entry = {"u": wp.u, "v": wp.v}
            if wp.depth is not None:
                entry["depth"] = wp.depth
            doc[name] = entry
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "WaypointSet":
        doc = json.loads(text)
        entries = {}
        for name, entry in doc.items():
            entries[name] = Waypoint(
                joint=name,
                u=float(entry["u"]),
                v=float(entry["v"]),
                depth=float(entry["depth"]) if "depth" in entry else None,
            )
        return cls(entries=entries)


def camera_pose_of(p: Pose, m: KinematicModel, cam: Camera) -> RigidTransform:
    """World rigid transform of the camera: head world transform composed with the mount."""
    head = m.joint_index["Head"]
    positions, rotations = fk_transforms(p, m)
    head_world = RigidTransform(rotation=rotations[head], translation=positions[head])
    return head_world.compose(cam.head_offset)


def project(point: np.ndarray, cam_pose: RigidTransform, cam: Camera):
    """Project one world point.

    Returns:
        (uv, visible, depth): ``uv = focal * (X/Z, Y/Z)`` in the camera
        frame, ``visible`` iff the depth clears the near plane and uv lies
        inside the image bounds, ``depth`` = camera-frame Z. Points at or
        behind the camera plane get a finite (0, 0) sentinel and are never
        visible; this function does not throw on them.
    """
    point = np.asarray(point, dtype=float)
    if not np.all(np.isfinite(point)):
        raise ValueError("point must be finite")
    pc = cam_pose.inverse_apply(point)
    depth = float(pc[2])
    if depth <= 1e-12:
        return np.zeros(2), False, depth
    uv = cam.focal * pc[:2] / depth
    visible = depth >= cam.near_plane and abs(uv[0]) <= IMAGE_BOUND and abs(uv[1]) <= IMAGE_BOUND
    return uv, bool(visible), depth


def project_points(points: np.ndarray, cam_pose: RigidTransform, cam: Camera):
    """Vectorized ``project`` over (N, 3) points -> (uv (N, 2), visible (N,), depth (N,))."""
    pc = cam_pose.inverse_apply(np.asarray(points, dtype=float))
    depth = pc[:, 2]
    safe = np.where(depth > 1e-12, depth, 1.0)
    uv = cam.focal * pc[:, :2] / safe[:, None]
    uv[depth <= 1e-12] = 0.0
    visible = (
        (depth >= cam.near_plane)
        & (np.abs(uv[:, 0]) <= IMAGE_BOUND)
        & (np.abs(uv[:, 1]) <= IMAGE_BOUND)
    )
    return uv, visible, depth


def backproject(uv: np.ndarray, depth: float, cam_pose: RigidTransform, cam: Camera) -> np.ndarray:
    """Invert ``project``: image point + depth back to a world 3-vector."""
    u, v = float(uv[0]), float(uv[1])
    pc = np.array([u / cam.focal * depth, v / cam.focal * depth, depth])
    return cam_pose.apply(pc)


def waypoints_from_goal(
    p_g: Pose,
    p_t: Pose,
    m: KinematicModel,
    cam: Camera,
    include_depth: bool = False,
) -> WaypointSet:
    """Ground-truth waypoints: project the goal pose's leaf joints onto the current view.

    The camera is the one carried by the current pose ``p_t``; a leaf joint
    gets an entry iff its goal position projects visibly.
    """
    cam_pose = camera_pose_of(p_t, m, cam)
    goal_positions = forward_kinematics(p_g, m)
    entries = {}
    for leaf in LEAF_JOINTS:
        idx = m.joint_index[LEAF_TO_SKELETON[leaf]]
        uv, visible, depth = project(goal_positions[idx], cam_pose, cam)
        if not visible:
            continue
        entries[leaf] = Waypoint(
            joint=leaf,
            u=float(uv[0]),
            v=float(uv[1]),
            depth=float(depth) if include_depth else None,
        )
    return WaypointSet(entries=entries)


def leaf_projections(p: Pose, m: KinematicModel, cam: Camera) -> dict[str, dict]:
    """Projection info for every leaf joint of ``p`` through its own camera."""
    cam_pose = camera_pose_of(p, m, cam)
    positions = forward_kinematics(p, m)
    out = {}
    for leaf in LEAF_JOINTS:
        idx = m.joint_index[LEAF_TO_SKELETON[leaf]]
        uv, visible, depth = project(positions[idx], cam_pose, cam)
        out[leaf] = {"u": float(uv[0]), "v": float(uv[1]), "visible": visible, "depth": depth}
    return out
