"""Wire formats for the control server.

Frame payloads are hashed on both ends, so serialization must be
reproducible in any language: canonical JSON uses sorted keys, compact
separators, and every float rendered as fixed 6-decimal notation (never
exponent form). The browser client reimplements the same rules; hashing the
canonical text therefore gives identical digests on both sides.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from ..camera import Camera, camera_pose_of, project
from ..kinematics import JOINT_NAMES, KinematicModel, Pose, forward_kinematics
from ..world import Observation

SCHEMA_FRAME = "waylift.frame.v1"
SCHEMA_SESSION = "waylift.session.v1"
SCHEMA_STEP = "waylift.step.v1"
SCHEMA_PLAN = "waylift.plan.v1"
SCHEMA_SNAPSHOT = "waylift.snapshot.v1"
SCHEMA_LOG = "waylift.log.v1"
SCHEMA_ERROR = "waylift.error.v1"


def canonical_json(value) -> str:
    """Serialize with sorted keys, compact separators, floats as %.6f."""
    parts: list[str] = []
    _write(value, parts)
    return "".join(parts)


def _write(value, parts: list[str]) -> None:
    if value is None:
        parts.append("null")
    elif value is True:
        parts.append("true")
    elif value is False:
        parts.append("false")
    elif isinstance(value, str):
        parts.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, (int, np.integer)):
        parts.append(str(int(value)))
    elif isinstance(value, (float, np.floating)):
        f = float(value)
        if not math.isfinite(f):
            raise ValueError("canonical payloads must be finite")
        if f == 0.0:
            f = 0.0  # normalize -0.0
        parts.append(f"{f:.6f}")
    elif isinstance(value, dict):
        parts.append("{")
        for i, key in enumerate(sorted(value)):
            if i:
                parts.append(",")
            if not isinstance(key, str):
                raise TypeError("canonical payload keys must be strings")
            parts.append(json.dumps(key, ensure_ascii=False))
            parts.append(":")
            _write(value[key], parts)
        parts.append("}")
    elif isinstance(value, (list, tuple)):
        parts.append("[")
        for i, item in enumerate(value):
            if i:
                parts.append(",")
            _write(item, parts)
        parts.append("]")
    else:
        raise TypeError(f"cannot canonicalize {type(value).__name__}")


def payload_hash(value) -> str:
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()


def frame_payload(
    obs: Observation,
    pose: Pose,
    m: KinematicModel,
    cam: Camera,
) -> dict:
    """Renderable frame: landmark features plus projected skeleton joints."""
    cam_pose = camera_pose_of(pose, m, cam)
    positions = forward_kinematics(pose, m)
    joints = []
    for name, point in zip(JOINT_NAMES, positions):
        uv, visible, depth = project(point, cam_pose, cam)
        joints.append(
            {
                "name": name,
                "u": float(uv[0]),
                "v": float(uv[1]),
                "visible": bool(visible),
                "depth": float(depth),
            }
        )
    return {
        "schema": SCHEMA_FRAME,
        "t": int(obs.t),
        "bounds": {"min": -0.5, "max": 0.5},
        "features": [
            {"id": int(i), "u": float(u), "v": float(v)} for i, (u, v) in zip(obs.ids, obs.uv)
        ],
        "joints": joints,
    }


def canonical_waypoints(doc: dict) -> str:
    """Canonical form of a WaypointSet JSON document (uv rounded to 4dp by
    the client; the echo re-renders the parsed values canonically)."""
    return canonical_json(doc)
