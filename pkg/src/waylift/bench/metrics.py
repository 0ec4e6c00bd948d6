"""Mean joint error metrics and plan integration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..camera import Camera, camera_pose_of, project
from ..kinematics import (
    JOINT_NAMES,
    LEAF_JOINTS,
    LEAF_TO_SKELETON,
    Action,
    KinematicModel,
    Pose,
    apply_action,
    forward_kinematics,
)

SUBSETS = ("leaf", "intermediate", "all")

_LEAF_SKELETON = tuple(LEAF_TO_SKELETON[leaf] for leaf in LEAF_JOINTS)
_LEAF_ROWS = tuple(JOINT_NAMES.index(n) for n in _LEAF_SKELETON)
_INTERMEDIATE_ROWS = tuple(i for i in range(len(JOINT_NAMES)) if i not in _LEAF_ROWS)


@dataclass(frozen=True)
class MjeReport:
    """MJE breakdown in meters plus per-joint distances and a visibility split.

    ``visible`` / ``not_visible`` average the per-joint distances of leaf
    joints whose goal position was / was not visible in the starting
    observation; either can be NaN when its class is empty.
    """

    leaf: float
    intermediate: float
    all: float
    per_joint: dict[str, float]
    visible: float
    not_visible: float


def _subset_rows(subset: str) -> tuple[int, ...]:
    if subset == "leaf":
        return _LEAF_ROWS
    if subset == "intermediate":
        return _INTERMEDIATE_ROWS
    if subset == "all":
        return tuple(range(len(JOINT_NAMES)))
    raise ValueError(f"unknown subset {subset!r}")


def mje(p_hat: Pose, p_g: Pose, m: KinematicModel, subset: str = "all") -> float:
    """Mean Euclidean distance (m) between FK joint positions over a subset.

    leaf = pelvis, head and both hands; intermediate = the other 11 joints.
    """
    rows = list(_subset_rows(subset))
    a = forward_kinematics(p_hat, m)[rows]
    b = forward_kinematics(p_g, m)[rows]
    return float(np.linalg.norm(a - b, axis=1).mean())


def mje_report(
    p_hat: Pose,
    p_g: Pose,
    m: KinematicModel,
    cam: Camera | None = None,
    p_t: Pose | None = None,
) -> MjeReport:
    """Full MJE breakdown; the visibility split needs the start pose and camera."""
    a = forward_kinematics(p_hat, m)
    b = forward_kinematics(p_g, m)
    dists = np.linalg.norm(a - b, axis=1)
    per_joint = {name: float(d) for name, d in zip(JOINT_NAMES, dists)}
    visible = not_visible = float("nan")
    if cam is not None and p_t is not None:
        cam_pose = camera_pose_of(p_t, m, cam)
        vis_d, invis_d = [], []
        for leaf in LEAF_JOINTS:
            row = JOINT_NAMES.index(LEAF_TO_SKELETON[leaf])
            _, is_visible, _ = project(b[row], cam_pose, cam)
            (vis_d if is_visible else invis_d).append(dists[row])
        if vis_d:
            visible = float(np.mean(vis_d))
        if invis_d:
            not_visible = float(np.mean(invis_d))
    return MjeReport(
        leaf=float(dists[list(_LEAF_ROWS)].mean()),
        intermediate=float(dists[list(_INTERMEDIATE_ROWS)].mean()),
        all=float(dists.mean()),
        per_joint=per_joint,
        visible=visible,
        not_visible=not_visible,
    )


def integrate_plan(p_t: Pose, actions) -> Pose:
    """Left-fold of ``apply_action`` over an action sequence."""
    pose = p_t
    for a in actions:
        if not isinstance(a, Action):
            a = Action.from_flat(np.asarray(a, dtype=float))
        pose = apply_action(pose, a)
    return pose
