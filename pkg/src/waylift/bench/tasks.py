"""Planning task construction from scripted trajectories.

A task is a start (context observations + poses), a goal observation, and a
hidden ground-truth goal pose used only for evaluation. Tasks are filtered
the same way throughout: at least one goal-pose joint must be visible in the
starting observation, and the leaf MJE between start and goal must be at
least 0.1 m so trivial stationary tasks never enter a suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..camera import Camera, camera_pose_of, project_points
from ..kinematics import KinematicModel, Pose, forward_kinematics
from ..world import WM_CONTEXT, Observation, Scene, generate_trajectory
from .metrics import mje

MIN_LEAF_MJE = 0.1


@dataclass(frozen=True)
class Task:
    """One planning problem; ``goal_pose`` is hidden from planners."""

    task_id: str
    scene: Scene
    context_observations: tuple[Observation, ...]
    context_poses: tuple[Pose, ...]
    goal_observation: Observation
    goal_pose: Pose
    horizon: int
    initial_mje: dict[str, float]

    @property
    def start_pose(self) -> Pose:
        return self.context_poses[-1]

    def to_dict(self) -> dict:
        def obs_dict(o: Observation) -> dict:
            return {
                "ids": [int(i) for i in o.ids],
                "uv": [[float(u), float(v)] for u, v in o.uv],
                "t": int(o.t),
            }

        return {
            "task_id": self.task_id,
            "scene": json.loads(self.scene.to_json()),
            "context_observations": [obs_dict(o) for o in self.context_observations],
            "context_poses": [[float(x) for x in p.flatten()] for p in self.context_poses],
            "goal_observation": obs_dict(self.goal_observation),
            "goal_pose": [float(x) for x in self.goal_pose.flatten()],
            "horizon": self.horizon,
            "initial_mje": self.initial_mje,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Task":
        def obs(o: dict) -> Observation:
            return Observation(
                ids=np.array(o["ids"], dtype=int),
                uv=np.array(o["uv"], dtype=float).reshape(-1, 2),
                t=int(o["t"]),
            )

        return cls(
            task_id=doc["task_id"],
            scene=Scene.from_json(json.dumps(doc["scene"])),
            context_observations=tuple(obs(o) for o in doc["context_observations"]),
            context_poses=tuple(Pose.from_flat(np.array(p)) for p in doc["context_poses"]),
            goal_observation=obs(doc["goal_observation"]),
            goal_pose=Pose.from_flat(np.array(doc["goal_pose"])),
            horizon=int(doc["horizon"]),
            initial_mje={k: float(v) for k, v in doc["initial_mje"].items()},
        )


def _goal_joint_visible(p_g: Pose, p_t: Pose, m: KinematicModel, cam: Camera) -> bool:
    cam_pose = camera_pose_of(p_t, m, cam)
    _, visible, _ = project_points(forward_kinematics(p_g, m), cam_pose, cam)
    return bool(visible.any())


def generate_tasks(
    scenes: list[Scene],
    m: KinematicModel,
    cam: Camera,
    rng: np.random.Generator,
    count: int,
    horizon: int = 8,
    mix: dict[str, float] | None = None,
    max_attempts_per_task: int = 60,
) -> list[Task]:
    """Sample ``count`` tasks passing both filters, goal ``horizon`` steps ahead.

    Raises RuntimeError with filter diagnostics when the attempt budget runs
    out (e.g. a mix that never moves cannot satisfy the 0.1 m leaf filter).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1 (a 0-step goal always fails the 0.1 m filter)")
    tasks: list[Task] = []
    rejected_mje = rejected_visibility = 0
    attempts_left = max(1, max_attempts_per_task) * count
    length = WM_CONTEXT + horizon
    while len(tasks) < count:
        if attempts_left <= 0:
            raise RuntimeError(
                f"task generation exhausted: {len(tasks)}/{count} tasks, "
                f"{rejected_mje} failed the leaf-MJE filter, "
                f"{rejected_visibility} failed the visibility filter"
            )
        attempts_left -= 1
        scene = scenes[int(rng.integers(len(scenes)))]
        traj = generate_trajectory(scene, m, rng, length=length, mix=mix, camera=cam)
        context = traj[:WM_CONTEXT]
        p_t = context[-1][0]
        p_g, o_g = traj[WM_CONTEXT - 1 + horizon]
        if mje(p_t, p_g, m, "leaf") < MIN_LEAF_MJE:
            rejected_mje += 1
            continue
        if not _goal_joint_visible(p_g, p_t, m, cam):
            rejected_visibility += 1
            continue
        initial = {s: mje(p_t, p_g, m, s) for s in ("leaf", "intermediate", "all")}
        tasks.append(
            Task(
                task_id=f"task-{len(tasks):04d}",
                scene=scene,
                context_observations=tuple(o for _, o in context),
                context_poses=tuple(p for p, _ in context),
                goal_observation=o_g,
                goal_pose=p_g,
                horizon=horizon,
                initial_mje=initial,
            )
        )
    return tasks


def save_tasks(tasks: list[Task], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(json.dumps(task.to_dict(), sort_keys=True) + "\n")


def load_tasks(path) -> list[Task]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(Task.from_dict(json.loads(line)))
    return out
