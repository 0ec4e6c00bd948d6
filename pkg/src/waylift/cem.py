"""Cross-Entropy Method planning in the low-level joint action space and in
the lifted waypoint space, with an observation-matching cost.

Each iteration draws N samples from a diagonal Gaussian, simulates them,
scores the final predicted frame against the goal observation, and refits
the Gaussian to the M lowest-cost samples. Sample randomness comes from
per-(iteration, sample) substreams of the seed, so results never depend on
evaluation order or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .camera import IMAGE_BOUND, Camera, Waypoint, WaypointSet, camera_pose_of, project
from .kinematics import (
    LEAF_JOINTS,
    LEAF_TO_SKELETON,
    NUM_JOINTS,
    Action,
    KinematicModel,
    forward_kinematics,
)
from .lifted import rollout_chain
from .policy import PolicyConfig, PolicyContext, heuristic_depth
from .world import MAX_JOINT_STEP, MAX_PELVIS_STEP, Observation, WorldModelState, wm_step

SPACES = ("low-level", "lifted-2d", "lifted-3d")

_DEPTH_CLIP = (0.1, 10.0)


@dataclass(frozen=True)
class CemConfig:
    """Planner knobs; defaults follow the benchmark configuration."""

    iterations: int = 6
    samples: int = 64
    elites: int = 16
    sigma_ll: float = 0.05
    sigma_hl: float = 0.3
    sigma_floor: float = 0.01
    horizon: int = 8  # low-level action count, or high-level step count L
    space: str = "lifted-2d"
    seed: int = 0
    use_cummin: bool = True

    def __post_init__(self):
        if not (0 < self.elites <= self.samples):
            raise ValueError("need 0 < elites <= samples")
        if self.iterations < 1 or self.horizon < 1:
            raise ValueError("iterations and horizon must be >= 1")
        if min(self.sigma_ll, self.sigma_hl, self.sigma_floor) <= 0:
            raise ValueError("sigmas must be positive")
        if self.space not in SPACES:
            raise ValueError(f"space must be one of {SPACES}")


@dataclass
class PlanResult:
    """Best plan found: low-level actions always, waypoint sequence when lifted."""

    best_actions: list[Action]
    best_hl: list[WaypointSet] | None
    best_cost: float
    cost_history: list[float] = field(default_factory=list)  # cumulative-min per iteration
    raw_cost_history: list[float] = field(default_factory=list)  # per-iteration best, no cummin
    eval: dict = field(default_factory=dict)


def observation_cost(pred: Observation, goal: Observation, lambda_miss: float = 0.5) -> float:
    """Mean 2D distance over shared landmark ids plus a mismatch penalty.

    The penalty is ``lambda_miss`` times the count of ids present in exactly
    one observation, normalized by the larger feature count. Looking away
    from everything the goal sees is therefore strictly worse (penalty up to
    ``2 * lambda_miss``) than any partial match. Two empty observations cost
    ``lambda_miss``.
    """
    n_pred, n_goal = len(pred), len(goal)
    if n_pred == 0 and n_goal == 0:
        return float(lambda_miss)
    common, pred_rows, goal_rows = np.intersect1d(pred.ids, goal.ids, return_indices=True)
    n_common = len(common)
    mismatch = (n_pred - n_common) + (n_goal - n_common)
    miss_frac = mismatch / max(n_pred, n_goal, 1)
    dist = 0.0
    if n_common:
        dist = float(np.linalg.norm(pred.uv[pred_rows] - goal.uv[goal_rows], axis=1).mean())
    return dist + float(lambda_miss) * miss_frac


def sample_mean_init(
    ctx: PolicyContext,
    m: KinematicModel,
    cam: Camera,
    cfg: CemConfig,
    policy_cfg: PolicyConfig | None = None,
) -> np.ndarray:
    """Initial prior mean for lifted search, shaped (L, 4, dims_per_joint).

    Per leaf joint: the current joint's projection when visible, else (0, 0);
    in lifted-3d a third channel holds the heuristic depth.
    """
    if cfg.space == "low-level":
        raise ValueError("sample_mean_init applies to lifted spaces")
    policy_cfg = policy_cfg or PolicyConfig()
    p_t = ctx.current_pose
    cam_pose = camera_pose_of(p_t, m, cam)
    positions = forward_kinematics(p_t, m)
    per_joint = 3 if cfg.space == "lifted-3d" else 2
    mean = np.zeros((len(LEAF_JOINTS), per_joint))
    for i, leaf in enumerate(LEAF_JOINTS):
        idx = m.joint_index[LEAF_TO_SKELETON[leaf]]
        uv, visible, _ = project(positions[idx], cam_pose, cam)
        if visible:
            mean[i, :2] = uv
        if per_joint == 3:
            wp = Waypoint(joint=leaf, u=float(mean[i, 0]), v=float(mean[i, 1]))
            mean[i, 2] = heuristic_depth(wp, p_t, m, cam, cam_pose)
    return np.tile(mean[None, :, :], (cfg.horizon, 1, 1))


def _clamp_ll(flat: np.ndarray) -> np.ndarray:
    out = flat.reshape(-1, 3 + 3 * NUM_JOINTS).copy()
    out[:, :3] = np.clip(out[:, :3], -MAX_PELVIS_STEP, MAX_PELVIS_STEP)
    out[:, 3:] = np.clip(out[:, 3:], -MAX_JOINT_STEP, MAX_JOINT_STEP)
    return out.reshape(flat.shape)


def _clamp_hl(sample: np.ndarray) -> np.ndarray:
    out = sample.copy()
    out[..., :2] = np.clip(out[..., :2], -IMAGE_BOUND, IMAGE_BOUND)
    if out.shape[-1] == 3:
        out[..., 2] = np.clip(out[..., 2], *_DEPTH_CLIP)
    return out


def _hl_to_waypoint_sets(sample: np.ndarray, with_depth: bool) -> list[WaypointSet]:
    sets = []
    for step in sample:
        entries = {}
        for i, leaf in enumerate(LEAF_JOINTS):
            entries[leaf] = Waypoint(
                joint=leaf,
                u=float(step[i, 0]),
                v=float(step[i, 1]),
                depth=float(step[i, 2]) if with_depth else None,
            )
        sets.append(WaypointSet(entries=entries))
    return sets


def _sample_rng(seed: int, iteration: int, sample: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(iteration, sample)))


def _noise_rng(seed: int, iteration: int) -> np.random.Generator:
    # One realization of policy/simulator noise per iteration, shared by all
    # samples (common random numbers): candidates are ranked under identical
    # conditions, so elite selection reflects the waypoints, not the noise.
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(iteration, 1 << 20)))


def cem_plan(
    state: WorldModelState,
    ctx: PolicyContext,
    goal: Observation,
    cfg: CemConfig,
    m: KinematicModel,
    cam: Camera,
    policy_cfg: PolicyConfig | None = None,
    lambda_miss: float = 0.5,
) -> PlanResult:
    """Plan toward a goal observation in the configured action space.

    Low-level search samples per-step 48-dim action deltas (clamped to the
    motion limits); lifted search samples waypoint sets (clamped to the image
    bounds) that the policy expands into action sequences. The returned plan
    is the lowest-cost sample across all iterations when ``use_cummin`` is
    set (the default), otherwise the final iteration's best; both histories
    are always recorded.
    """
    policy_cfg = policy_cfg or PolicyConfig()
    lifted = cfg.space != "low-level"
    with_depth = cfg.space == "lifted-3d"
    if lifted:
        mean = sample_mean_init(ctx, m, cam, cfg, policy_cfg)
        std = np.full(mean.shape, cfg.sigma_hl)
        if with_depth:
            policy_cfg = replace(policy_cfg, depth_mode="given-3d")
    else:
        mean = np.zeros((cfg.horizon, 3 + 3 * NUM_JOINTS))
        std = np.full(mean.shape, cfg.sigma_ll)

    best_cost = np.inf
    best_sample = None
    best_rollouts = None
    cost_history: list[float] = []
    raw_cost_history: list[float] = []
    final_iter_best = (np.inf, None, None)

    for it in range(cfg.iterations):
        costs = np.empty(cfg.samples)
        samples = []
        extras = []
        for i in range(cfg.samples):
            rng = _sample_rng(cfg.seed, it, i)
            draw = mean + std * rng.standard_normal(mean.shape)
            if lifted:
                draw = _clamp_hl(draw)
                hl_sets = _hl_to_waypoint_sets(draw, with_depth)
                rollouts, _, _ = rollout_chain(
                    state, ctx, hl_sets, m, cam, policy_cfg, _noise_rng(cfg.seed, it)
                )
                pred = rollouts[-1].observations[-1]
                extras.append(rollouts)
            else:
                draw = _clamp_ll(draw)
                sim = state.clone(rng=_noise_rng(cfg.seed, it))
                pred = None
                for row in draw:
                    pred = wm_step(sim, Action.from_flat(row))
                extras.append(None)
            samples.append(draw)
            costs[i] = observation_cost(pred, goal, lambda_miss)

        order = np.argsort(costs, kind="stable")
        iter_best = int(order[0])
        raw_cost_history.append(float(costs[iter_best]))
        if costs[iter_best] < best_cost:
            best_cost = float(costs[iter_best])
            best_sample = samples[iter_best]
            best_rollouts = extras[iter_best]
        cost_history.append(best_cost)
        if it == cfg.iterations - 1:
            final_iter_best = (float(costs[iter_best]), samples[iter_best], extras[iter_best])

        # Degenerate iteration (all samples equal cost) leaves the prior as is.
        if costs.max() - costs.min() > 1e-15:
            elite = np.stack([samples[int(j)] for j in order[: cfg.elites]])
            mean = elite.mean(axis=0)
            std = np.maximum(elite.std(axis=0), cfg.sigma_floor)

    if not cfg.use_cummin:
        best_cost, best_sample, best_rollouts = final_iter_best

    if lifted:
        actions = [a for roll in best_rollouts for a in roll.actions]
        best_hl = _hl_to_waypoint_sets(best_sample, with_depth)
    else:
        actions = [Action.from_flat(row) for row in best_sample]
        best_hl = None
    return PlanResult(
        best_actions=actions,
        best_hl=best_hl,
        best_cost=float(best_cost),
        cost_history=cost_history,
        raw_cost_history=raw_cost_history,
    )
