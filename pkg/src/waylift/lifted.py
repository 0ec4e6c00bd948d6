"""Lifted world model: one high-level action in, a T-step observation rollout out.

The policy turns the waypoint set into T low-level actions; the low-level
world model then advances once per action, appending each new observation to
its context. The input state is never mutated: every rollout operates on a
clone, so a planner can fan out any number of samples from one root.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera, WaypointSet
from .kinematics import Action, KinematicModel, Pose, apply_action
from .policy import PolicyConfig, PolicyContext, generate_actions
from .world import Observation, WorldModelState, wm_step


@dataclass(frozen=True)
class LwmRollout:
    """One lifted step: T actions, the T observations they produced, and the
    integrated pose estimate (diagnostics only, not simulator ground truth)."""

    actions: tuple[Action, ...]
    observations: tuple[Observation, ...]
    final_pose_estimate: Pose

    def __post_init__(self):
        if len(self.actions) != len(self.observations):
            raise ValueError("rollout actions and observations must align")
        times = [o.t for o in self.observations]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("rollout observations must be time-ordered")


def _roll_on(
    sim: WorldModelState,
    ctx: PolicyContext,
    a_hl: WaypointSet,
    m: KinematicModel,
    cam: Camera,
    cfg: PolicyConfig,
    policy_rng: np.random.Generator | None,
) -> LwmRollout:
    """Advance ``sim`` in place by one lifted step and report the rollout."""
    actions = generate_actions(ctx, a_hl, m, cam, cfg, policy_rng)
    observations = []
    pose = ctx.current_pose
    for a in actions:
        observations.append(wm_step(sim, a))
        pose = apply_action(pose, a)
    return LwmRollout(
        actions=tuple(actions),
        observations=tuple(observations),
        final_pose_estimate=pose,
    )


def lwm_rollout(
    state: WorldModelState,
    ctx: PolicyContext,
    a_hl: WaypointSet,
    m: KinematicModel,
    cam: Camera,
    cfg: PolicyConfig | None = None,
    rng: np.random.Generator | None = None,
) -> LwmRollout:
    """Roll one high-level action through policy + world model.

    ``state`` and ``ctx`` must agree on the latest observation. The rng, when
    given, is split between the policy's goal noise and the simulator's
    process noise so two rollouts with equal seeds are identical.
    """
    cfg = cfg or PolicyConfig()
    if state.latest.t != ctx.observations[-1].t:
        raise ValueError("state and context disagree on the latest observation")
    if rng is not None:
        policy_rng, sim_rng = rng.spawn(2)
    else:
        policy_rng, sim_rng = None, None
    sim = state.clone(rng=sim_rng)
    return _roll_on(sim, ctx, a_hl, m, cam, cfg, policy_rng)


def rollout_chain(
    state: WorldModelState,
    ctx: PolicyContext,
    hl_sequence: list[WaypointSet],
    m: KinematicModel,
    cam: Camera,
    cfg: PolicyConfig | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[list[LwmRollout], WorldModelState, PolicyContext]:
    """Chain L lifted steps, carrying the observation and pose context forward.

    Pose context entries for later steps are integrated estimates (the
    simulator's true pose stays hidden). Returns the rollouts plus the
    advanced state and context for further stepping.
    """
    cfg = cfg or PolicyConfig()
    if state.latest.t != ctx.observations[-1].t:
        raise ValueError("state and context disagree on the latest observation")
    if rng is not None:
        sim_rng, policy_master = rng.spawn(2)
    else:
        sim_rng, policy_master = None, None
    sim = state.clone(rng=sim_rng)
    rollouts = []
    obs_hist = list(ctx.observations)
    pose_hist = list(ctx.poses)
    for a_hl in hl_sequence:
        step_ctx = PolicyContext.from_history(obs_hist, pose_hist, cfg.K_pi)
        policy_rng = policy_master.spawn(1)[0] if policy_master is not None else None
        roll = _roll_on(sim, step_ctx, a_hl, m, cam, cfg, policy_rng)
        pose = pose_hist[-1]
        for a, obs in zip(roll.actions, roll.observations):
            pose = apply_action(pose, a)
            obs_hist.append(obs)
            pose_hist.append(pose)
        rollouts.append(roll)
    final_ctx = PolicyContext.from_history(obs_hist, pose_hist, cfg.K_pi)
    return rollouts, sim, final_ctx
