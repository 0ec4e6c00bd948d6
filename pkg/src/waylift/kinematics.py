"""Body state representation and forward kinematics for a 15-joint upper body.

A pose is the pelvis position plus per-joint Euler angles; an action is the
48-dim delta between two consecutive poses. Joint rotation deltas compose on
the right (``R_next = R_current @ R_delta``), and the pelvis translation
delta is expressed in the current pelvis frame
(``x_next = x_current + R_pelvis_current @ dx``), so ``apply_action`` and
``action_between`` are exact inverses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .rotations import EULER_CONVENTION, _e2m, _m2e, euler_to_matrix, matrix_to_euler

JOINT_NAMES = (
    "Pelvis",
    "L5",
    "L3",
    "T12",
    "T8",
    "Neck",
    "Head",
    "R_Shoulder",
    "R_UpperArm",
    "R_Forearm",
    "R_Hand",
    "L_Shoulder",
    "L_UpperArm",
    "L_Forearm",
    "L_Hand",
)
NUM_JOINTS = len(JOINT_NAMES)
POSE_DIM = 3 + 3 * NUM_JOINTS  # 48

_PARENT_NAMES = {
    "L5": "Pelvis",
    "L3": "L5",
    "T12": "L3",
    "T8": "T12",
    "Neck": "T8",
    "Head": "Neck",
    "R_Shoulder": "T8",
    "R_UpperArm": "R_Shoulder",
    "R_Forearm": "R_UpperArm",
    "R_Hand": "R_Forearm",
    "L_Shoulder": "T8",
    "L_UpperArm": "L_Shoulder",
    "L_Forearm": "L_UpperArm",
    "L_Hand": "L_Forearm",
}

# Leaf joints steerable through waypoints, in the fixed flattening order.
LEAF_JOINTS = ("pelvis", "head", "left_hand", "right_hand")
LEAF_TO_SKELETON = {
    "pelvis": "Pelvis",
    "head": "Head",
    "left_hand": "L_Hand",
    "right_hand": "R_Hand",
}

# World frame: X forward, Y left, Z up. Defaults are anthropometric ballpark
# figures (zero pose = T-pose), overridable per subject.
_DEFAULT_OFFSETS = {
    "Pelvis": (0.0, 0.0, 0.0),
    "L5": (0.0, 0.0, 0.10),
    "L3": (0.0, 0.0, 0.10),
    "T12": (0.0, 0.0, 0.10),
    "T8": (0.0, 0.0, 0.10),
    "Neck": (0.0, 0.0, 0.10),
    "Head": (0.0, 0.0, 0.15),
    "R_Shoulder": (0.0, -0.20, 0.0),
    "R_UpperArm": (0.0, -0.28, 0.0),
    "R_Forearm": (0.0, -0.25, 0.0),
    "R_Hand": (0.0, -0.08, 0.0),
    "L_Shoulder": (0.0, 0.20, 0.0),
    "L_UpperArm": (0.0, 0.28, 0.0),
    "L_Forearm": (0.0, 0.25, 0.0),
    "L_Hand": (0.0, 0.08, 0.0),
}


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class KinematicModel:
    """Rigid tree over JOINT_NAMES: parent indices plus bone offsets (m).

    Offsets are expressed in each child joint's own frame; bone lengths are
    constant and strictly positive for every non-root joint.
    """

    parent_index: tuple[int, ...]
    bone_offsets: np.ndarray  # (15, 3) meters

    def __post_init__(self):
        if len(self.parent_index) != NUM_JOINTS:
            raise ValueError("parent_index must cover all joints")
        if self.parent_index[0] != -1:
            raise ValueError("Pelvis must be the root")
        offsets = _frozen(self.bone_offsets)
        if offsets.shape != (NUM_JOINTS, 3):
            raise ValueError("bone_offsets must have shape (15, 3)")
        for j in range(1, NUM_JOINTS):
            p = self.parent_index[j]
            if not 0 <= p < j:
                raise ValueError(
                    f"joint {JOINT_NAMES[j]} must have exactly one parent "
                    "that precedes it in the fixed order"
                )
            if np.linalg.norm(offsets[j]) <= 0.0:
                raise ValueError(f"bone length of {JOINT_NAMES[j]} must be positive")
        object.__setattr__(self, "bone_offsets", offsets)

    @property
    def joint_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(JOINT_NAMES)}

    def chain_length(self, joint: str) -> float:
        """Summed bone lengths from the root to ``joint``."""
        idx = self.joint_index[joint]
        total = 0.0
        while idx > 0:
            total += float(np.linalg.norm(self.bone_offsets[idx]))
            idx = self.parent_index[idx]
        return total

    def to_json(self) -> str:
        doc = {
            "joints": list(JOINT_NAMES),
            "parents": {
                JOINT_NAMES[j]: JOINT_NAMES[self.parent_index[j]]
                for j in range(1, NUM_JOINTS)
            },
            "offsets_m": {name: list(self.bone_offsets[i]) for i, name in enumerate(JOINT_NAMES)},
            "euler_convention": EULER_CONVENTION,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "KinematicModel":
        doc = json.loads(text)
        if tuple(doc["joints"]) != JOINT_NAMES:
            raise ValueError("joint order does not match the fixed 15-joint tree")
        if doc.get("euler_convention") != EULER_CONVENTION:
            raise ValueError(f"unsupported euler convention {doc.get('euler_convention')!r}")
        index = {name: i for i, name in enumerate(JOINT_NAMES)}
        parents = [-1] * NUM_JOINTS
        for child, parent in doc["parents"].items():
            parents[index[child]] = index[parent]
        offsets = np.array([doc["offsets_m"][name] for name in JOINT_NAMES], dtype=float)
        return cls(parent_index=tuple(parents), bone_offsets=offsets)


def default_model() -> KinematicModel:
    """The shipped default skeleton (configuration default, per-subject overridable)."""
    index = {name: i for i, name in enumerate(JOINT_NAMES)}
    parents = [-1] + [index[_PARENT_NAMES[name]] for name in JOINT_NAMES[1:]]
    offsets = np.array([_DEFAULT_OFFSETS[name] for name in JOINT_NAMES], dtype=float)
    return KinematicModel(parent_index=tuple(parents), bone_offsets=offsets)


@dataclass(frozen=True)
class Pose:
    """Pelvis position (m) plus 15 joints' Z-X-Y Euler angles (rad)."""

    pelvis_position: np.ndarray  # (3,)
    joint_angles: np.ndarray  # (15, 3), row 0 is the pelvis orientation

    def __post_init__(self):
        pos = _frozen(self.pelvis_position)
        ang = _frozen(self.joint_angles)
        if pos.shape != (3,) or ang.shape != (NUM_JOINTS, 3):
            raise ValueError("pose must hold a 3-vector and (15, 3) angles")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(ang))):
            raise ValueError("pose values must be finite")
        object.__setattr__(self, "pelvis_position", pos)
        object.__setattr__(self, "joint_angles", ang)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.pelvis_position, self.joint_angles.ravel()])

    @classmethod
    def from_flat(cls, values) -> "Pose":
        values = np.asarray(values, dtype=float)
        if values.shape != (POSE_DIM,):
            raise ValueError(f"expected {POSE_DIM} scalars, got shape {values.shape}")
        return cls(values[:3], values[3:].reshape(NUM_JOINTS, 3))

    @classmethod
    def reference(cls) -> "Pose":
        """Reference-frame pose: zero pelvis position and all-zero angles."""
        return cls(np.zeros(3), np.zeros((NUM_JOINTS, 3)))

    @classmethod
    def _make(cls, pelvis_position: np.ndarray, joint_angles: np.ndarray) -> "Pose":
        # Internal: skips validation/copies for freshly computed arrays.
        out = object.__new__(cls)
        pelvis_position.flags.writeable = False
        joint_angles.flags.writeable = False
        object.__setattr__(out, "pelvis_position", pelvis_position)
        object.__setattr__(out, "joint_angles", joint_angles)
        return out


@dataclass(frozen=True)
class Action:
    """48-dim pose delta: pelvis translation (current pelvis frame) + joint angle deltas."""

    pelvis_delta: np.ndarray  # (3,) meters
    joint_deltas: np.ndarray  # (15, 3) radians

    def __post_init__(self):
        dx = _frozen(self.pelvis_delta)
        da = _frozen(self.joint_deltas)
        if dx.shape != (3,) or da.shape != (NUM_JOINTS, 3):
            raise ValueError("action must hold a 3-vector and (15, 3) deltas")
        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(da))):
            raise ValueError("action values must be finite")
        object.__setattr__(self, "pelvis_delta", dx)
        object.__setattr__(self, "joint_deltas", da)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.pelvis_delta, self.joint_deltas.ravel()])

    @classmethod
    def from_flat(cls, values) -> "Action":
        values = np.asarray(values, dtype=float)
        if values.shape != (POSE_DIM,):
            raise ValueError(f"expected {POSE_DIM} scalars, got shape {values.shape}")
        return cls(values[:3], values[3:].reshape(NUM_JOINTS, 3))

    @classmethod
    def zero(cls) -> "Action":
        return cls(np.zeros(3), np.zeros((NUM_JOINTS, 3)))

    @classmethod
    def _make(cls, pelvis_delta: np.ndarray, joint_deltas: np.ndarray) -> "Action":
        # Internal: skips validation/copies for freshly computed arrays.
        out = object.__new__(cls)
        pelvis_delta.flags.writeable = False
        joint_deltas.flags.writeable = False
        object.__setattr__(out, "pelvis_delta", pelvis_delta)
        object.__setattr__(out, "joint_deltas", joint_deltas)
        return out


def local_rotations(p: Pose) -> np.ndarray:
    """Per-joint local rotation matrices (15, 3, 3), cached on the pose."""
    R = getattr(p, "_local_R", None)
    if R is None:
        R = _e2m(p.joint_angles)
        R.flags.writeable = False
        object.__setattr__(p, "_local_R", R)
    return R


def _attach_rotations(p: Pose, R: np.ndarray) -> Pose:
    R.flags.writeable = False
    object.__setattr__(p, "_local_R", R)
    return p


def action_between(p_t: Pose, p_next: Pose) -> Action:
    """The action carrying ``p_t`` to ``p_next`` under ``apply_action``."""
    R_t = local_rotations(p_t)
    R_next = local_rotations(p_next)
    deltas = _m2e(np.einsum("jik,jkl->jil", np.swapaxes(R_t, -1, -2), R_next))
    dx_world = p_next.pelvis_position - p_t.pelvis_position
    dx = R_t[0].T @ dx_world
    return Action._make(dx, deltas)


def apply_action(p_t: Pose, a: Action) -> Pose:
    """Integrate one action: rotations compose on the right, translation in the pelvis frame."""
    R_t = local_rotations(p_t)
    R_d = _e2m(a.joint_deltas)
    R_new = np.einsum("jik,jkl->jil", R_t, R_d)
    new_pos = p_t.pelvis_position + R_t[0] @ a.pelvis_delta
    return _attach_rotations(Pose._make(new_pos, _m2e(R_new)), R_new)


def fk_transforms(p: Pose, m: KinematicModel) -> tuple[np.ndarray, np.ndarray]:
    """World positions (15, 3) and world rotations (15, 3, 3) in one pass.

    Each joint's world rotation is its parent's world rotation composed with
    its own local rotation; its position is the parent position plus the bone
    offset rotated into the world by the joint's own world rotation.
    """
    R_local = local_rotations(p)
    world_R = np.empty((NUM_JOINTS, 3, 3))
    positions = np.empty((NUM_JOINTS, 3))
    world_R[0] = R_local[0]
    positions[0] = p.pelvis_position
    parents = m.parent_index
    offsets = m.bone_offsets
    for j in range(1, NUM_JOINTS):
        parent = parents[j]
        Rj = world_R[parent] @ R_local[j]
        world_R[j] = Rj
        positions[j] = positions[parent] + Rj @ offsets[j]
    return positions, world_R


def forward_kinematics(p: Pose, m: KinematicModel) -> np.ndarray:
    """World positions (15, 3) of every joint (see ``fk_transforms``)."""
    return fk_transforms(p, m)[0]


def joint_world_rotations(p: Pose, m: KinematicModel) -> np.ndarray:
    """World rotations (15, 3, 3) of every joint (see ``fk_transforms``)."""
    return fk_transforms(p, m)[1]
