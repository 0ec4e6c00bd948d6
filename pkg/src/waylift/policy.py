"""Waypoint-conditioned policy: maps an observation/pose context plus an
optional waypoint set to a sequence of T low-level actions.

The policy is analytic: present waypoints are back-projected to 3D goal
targets, a damped-least-squares solver finds a goal pose matching them while
staying near the current pose, and the action sequence interpolates from the
current pose to that goal (linear in pelvis position, geodesic per joint).
Masking any subset of waypoints is supported; masking all of them falls back
to unconditioned generation (decayed constant-velocity extrapolation of the
last context action). Injected goal noise provides the stochastic sampling
mode used by planners.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .camera import Camera, RigidTransform, Waypoint, WaypointSet, backproject, camera_pose_of
from .kinematics import (
    LEAF_JOINTS,
    LEAF_TO_SKELETON,
    NUM_JOINTS,
    Action,
    KinematicModel,
    Pose,
    action_between,
    apply_action,
    forward_kinematics,
    local_rotations,
)
from .rotations import _e2m, _m2e, so3_exp, so3_log
from .world import MAX_JOINT_STEP, MAX_PELVIS_STEP, Observation

DEPTH_MODES = ("heuristic-2d", "given-3d")

# Interpolation caps per step, with margin under the motion-generator limits
# so emitted actions always stay realistic.
_STEP_PELVIS_CAP = 0.22
_STEP_JOINT_CAP = 0.35

# Depth heuristic bounds for joints without a reach constraint.
_DEPTH_RANGE = (0.2, 10.0)
_DEPTH_FALLBACK_MIN = 0.4

# Rotations along this chain steer the head camera; the goal solver holds
# them much harder than the arms so the view direction stays predictable.
_TORSO_CHAIN = ("Pelvis", "L5", "L3", "T12", "T8", "Neck", "Head")
_TORSO_HOLD = 0.05

_EYE3 = np.eye(3)


@dataclass(frozen=True)
class PolicyConfig:
    """Policy knobs; defaults follow the benchmark configuration."""

    T: int = 8
    K_pi: int = 3
    ik_damping: float = 0.1
    ik_iterations: int = 12
    goal_noise_scale: float = 0.03
    hold_weight: float = 1e-4
    depth_mode: str = "heuristic-2d"

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.K_pi < 0:
            raise ValueError("K_pi must be >= 0")
        if not (self.ik_damping > 0):
            raise ValueError("ik_damping must be positive")
        if self.ik_iterations < 1:
            raise ValueError("ik_iterations must be >= 1")
        if self.goal_noise_scale < 0:
            raise ValueError("goal_noise_scale must be >= 0")
        if self.hold_weight < 0:
            raise ValueError("hold_weight must be >= 0")
        if self.depth_mode not in DEPTH_MODES:
            raise ValueError(f"depth_mode must be one of {DEPTH_MODES}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "T": self.T,
                "K_pi": self.K_pi,
                "ik_damping": self.ik_damping,
                "ik_iterations": self.ik_iterations,
                "goal_noise_scale": self.goal_noise_scale,
                "hold_weight": self.hold_weight,
                "depth_mode": self.depth_mode,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "PolicyConfig":
        return cls(**json.loads(text))


@dataclass(frozen=True)
class PolicyContext:
    """The policy's view of recent history: up to K_pi+1 observations and poses."""

    observations: tuple[Observation, ...]
    poses: tuple[Pose, ...]

    def __post_init__(self):
        obs = tuple(self.observations)
        poses = tuple(self.poses)
        if len(obs) != len(poses) or not obs:
            raise ValueError("context needs equally many observations and poses (>= 1)")
        times = [o.t for o in obs]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("context observations must be time-ordered")
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "poses", poses)

    @classmethod
    def from_history(cls, observations, poses, k_pi: int = 3) -> "PolicyContext":
        n = k_pi + 1
        return cls(tuple(observations[-n:]), tuple(poses[-n:]))

    @property
    def current_pose(self) -> Pose:
        return self.poses[-1]


def sample_mask(rng: np.random.Generator) -> dict[str, bool]:
    """Waypoint mask draw: half the time nothing is masked, otherwise each
    leaf joint is masked independently with probability 0.5.

    Returns a dict leaf-joint -> True if masked.
    """
    if rng.random() < 0.5:
        return {leaf: False for leaf in LEAF_JOINTS}
    return {leaf: bool(rng.random() < 0.5) for leaf in LEAF_JOINTS}


def apply_mask(ws: WaypointSet, mask: dict[str, bool]) -> WaypointSet:
    """Drop masked entries; masked and out-of-frame share one representation."""
    return WaypointSet({k: v for k, v in ws.entries.items() if not mask.get(k, False)})


def _ray_through(w: Waypoint, cam_pose: RigidTransform, cam: Camera):
    # Unnormalized direction scaled so the ray parameter equals camera-frame depth.
    d_cam = np.array([w.u / cam.focal, w.v / cam.focal, 1.0])
    return cam_pose.translation, cam_pose.rotation @ d_cam


def heuristic_depth(
    w: Waypoint,
    p_t: Pose,
    m: KinematicModel,
    cam: Camera,
    cam_pose: RigidTransform,
    depth_hint: float | None = None,
    carry: np.ndarray | None = None,
) -> float:
    """Depth guess for a 2D waypoint (no privileged depth available).

    Hands in front of the camera keep their current working distance clamped
    to [0.2 m, reach] (reach = summed bone lengths from the pelvis). For the
    pelvis and head the depth is where the ray crosses the joint's current
    height (walking keeps those heights roughly constant). When neither rule
    applies the fallbacks are, in order: the caller's ``depth_hint``
    (typically derived from an already-resolved pelvis target), a
    constant-velocity ``carry`` (expected world displacement over the action
    window), and finally the joint's current depth. The heuristic cannot
    express arbitrary depth changes; planners compensate by iterating.
    """
    positions = forward_kinematics(p_t, m)
    idx = m.joint_index[LEAF_TO_SKELETON[w.joint]]
    current_depth = float(cam_pose.inverse_apply(positions[idx])[2])
    if w.joint in ("left_hand", "right_hand"):
        if depth_hint is not None:
            return float(np.clip(depth_hint, *_DEPTH_RANGE))
        if current_depth >= _DEPTH_RANGE[0]:
            reach = m.chain_length(LEAF_TO_SKELETON[w.joint])
            return float(np.clip(current_depth, _DEPTH_RANGE[0], reach))
    else:
        origin, direction = _ray_through(w, cam_pose, cam)
        plane_z = positions[idx][2]
        if abs(direction[2]) > 0.05:
            s = (plane_z - origin[2]) / direction[2]
            if _DEPTH_RANGE[0] <= s <= _DEPTH_RANGE[1]:
                return float(s)
        if depth_hint is not None:
            return float(np.clip(depth_hint, *_DEPTH_RANGE))
    if carry is not None:
        carried = float(cam_pose.inverse_apply(positions[idx] + carry)[2])
        if carried >= _DEPTH_RANGE[0]:
            return float(np.clip(carried, *_DEPTH_RANGE))
    return float(np.clip(current_depth, _DEPTH_FALLBACK_MIN, _DEPTH_RANGE[1]))


def context_displacement(ctx: PolicyContext, steps: int) -> np.ndarray | None:
    """Expected pelvis displacement over ``steps`` at the context's recent velocity."""
    if len(ctx.poses) < 2:
        return None
    v = ctx.poses[-1].pelvis_position - ctx.poses[-2].pelvis_position
    return steps * v


def backproject_waypoint(
    w: Waypoint,
    ctx: PolicyContext,
    m: KinematicModel,
    cam: Camera,
    cfg: PolicyConfig | None = None,
    depth_hint: float | None = None,
) -> np.ndarray:
    """3D goal target for one waypoint: the current camera's ray through its
    uv, at the waypoint's own depth (given-3d) or a heuristic depth.

    ``depth_hint`` lets callers couple depths across a waypoint set (e.g.
    reuse the pelvis target depth for joints whose own heuristic is
    uninformative).
    """
    cfg = cfg or PolicyConfig()
    p_t = ctx.current_pose
    cam_pose = camera_pose_of(p_t, m, cam)
    if cfg.depth_mode == "given-3d" and w.depth is not None:
        depth = float(w.depth)
    else:
        carry = context_displacement(ctx, cfg.T)
        depth = heuristic_depth(w, p_t, m, cam, cam_pose, depth_hint, carry)
    depth = _clamp_depth_to_workspace(w, depth, cam_pose, cam)
    return backproject(w.uv, depth, cam_pose, cam)


# Per-joint height bands for an upright human-scale embodiment; depths whose
# ray point leaves the band (e.g. an inconsistent sampled uv/depth pair
# putting a pelvis target at knee height) are pulled back along the ray.
_WORKSPACE_Z = {
    "pelvis": (0.6, 1.3),
    "head": (1.2, 1.9),
    "left_hand": (0.2, 2.2),
    "right_hand": (0.2, 2.2),
}


def _clamp_depth_to_workspace(w: Waypoint, depth: float, cam_pose: RigidTransform, cam: Camera) -> float:
    origin, direction = _ray_through(w, cam_pose, cam)
    if abs(direction[2]) < 1e-9:
        return depth
    band = _WORKSPACE_Z[w.joint]
    s_lo = (band[0] - origin[2]) / direction[2]
    s_hi = (band[1] - origin[2]) / direction[2]
    lo, hi = min(s_lo, s_hi), max(s_lo, s_hi)
    lo = max(lo, 0.05)
    hi = max(hi, 0.05)
    return float(np.clip(depth, lo, hi))


def solve_goal_pose(
    targets: dict[str, np.ndarray],
    p_t: Pose,
    m: KinematicModel,
    cfg: PolicyConfig | None = None,
) -> Pose:
    """Best-effort goal pose: damped least squares on the FK position error of
    the targeted joints plus a hold term keeping everything near ``p_t``.

    ``targets`` maps skeleton joint names (leaf joints, any subset) to world
    positions. With no targets the current pose is returned unchanged.
    Terminates after ``ik_iterations`` or when every target residual drops
    below 1e-4 m; the result is a minimizer estimate, not a guarantee.

    The hold is anisotropic: rotations along the pelvis-to-head chain are
    held hard (they steer the camera but contribute little to reaching leaf
    positions, which translation and the arms handle), everything else at
    ``hold_weight``.
    """
    cfg = cfg or PolicyConfig()
    if not targets:
        return p_t
    target_idx = [m.joint_index[name] for name in sorted(targets)]
    target_pos = np.array([targets[name] for name in sorted(targets)], dtype=float)

    pos = p_t.pelvis_position.copy()
    R_local = local_rotations(p_t).copy()
    R_ref = R_local.copy()
    n_params = 3 + 3 * NUM_JOINTS
    lam2 = cfg.ik_damping**2
    w_vec = np.full(n_params, cfg.hold_weight)
    for name in _TORSO_CHAIN:
        j = m.joint_index[name]
        w_vec[3 + 3 * j : 6 + 3 * j] = _TORSO_HOLD

    chains = [np.array(c, dtype=int) for c in _ancestor_table(m)]
    # rotation of joint j swings the subtree about its parent's position
    anchor_idx = np.array([max(p, 0) for p in m.parent_index], dtype=int)

    for _ in range(cfg.ik_iterations):
        world_R = np.empty((NUM_JOINTS, 3, 3))
        world_p = np.empty((NUM_JOINTS, 3))
        world_R[0] = R_local[0]
        world_p[0] = pos
        for j in range(1, NUM_JOINTS):
            parent = m.parent_index[j]
            world_R[j] = world_R[parent] @ R_local[j]
            world_p[j] = world_p[parent] + world_R[j] @ m.bone_offsets[j]

        residual = target_pos - world_p[target_idx]
        if np.linalg.norm(residual, axis=1).max() < 1e-4:
            break

        J = np.zeros((3 * len(target_idx), n_params))
        for row, e in enumerate(target_idx):
            chain = chains[e]
            block = J[3 * row : 3 * row + 3]
            block[:, 0:3] = _EYE3
            levers = world_p[e] - world_p[anchor_idx[chain]]
            parts = -np.einsum("nij,njk->nik", _skew3(levers), world_R[chain])
            block[:, 3:].reshape(3, NUM_JOINTS, 3)[:, chain, :] = parts.transpose(1, 0, 2)

        # Hold offsets: pelvis translation in meters, per-joint matrix-log
        # distance from the reference pose.
        q_hold = np.concatenate(
            [
                pos - p_t.pelvis_position,
                so3_log(np.einsum("jik,jkl->jil", np.swapaxes(R_ref, -1, -2), R_local)).ravel(),
            ]
        )
        # Solve (J^T J + D) step = J^T r - W q in dual form: the target block
        # has at most 12 rows, so invert a k x k system instead of 48 x 48.
        d_inv = 1.0 / (w_vec + lam2)
        b = J.T @ residual.ravel() - w_vec * q_hold
        JD = J * d_inv  # J D^-1
        K = JD @ J.T
        K.flat[:: K.shape[0] + 1] += 1.0
        step = d_inv * b - JD.T @ np.linalg.solve(K, JD @ b)
        if np.abs(step).max() < 1e-4:
            break

        pos = pos + step[:3]
        R_local = np.einsum("jik,jkl->jil", R_local, so3_exp(step[3:].reshape(NUM_JOINTS, 3)))

    return Pose._make(pos, _m2e(R_local))


def _ancestor_table(m: KinematicModel) -> list[list[int]]:
    table = []
    for j in range(NUM_JOINTS):
        chain = []
        k = j
        while k >= 0:
            chain.append(k)
            k = m.parent_index[k]
        table.append(chain[::-1])
    return table


def _skew3(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _scale_action(a: Action, factor: float) -> Action:
    return Action._make(a.pelvis_delta * factor, a.joint_deltas * factor)


def _clamp_action(a: Action) -> Action:
    return Action._make(
        np.clip(a.pelvis_delta, -MAX_PELVIS_STEP, MAX_PELVIS_STEP),
        np.clip(a.joint_deltas, -MAX_JOINT_STEP, MAX_JOINT_STEP),
    )


def _interpolate_to(p_t: Pose, p_g: Pose, steps: int) -> list[Pose]:
    """Linear pelvis path + per-joint geodesic rotation path, with per-step caps."""
    dx = p_g.pelvis_position - p_t.pelvis_position
    max_travel = steps * _STEP_PELVIS_CAP
    norm = float(np.linalg.norm(dx))
    if norm > max_travel:
        dx = dx * (max_travel / norm)

    R_t = _e2m(p_t.joint_angles)
    R_g = _e2m(p_g.joint_angles)
    logs = so3_log(np.einsum("jik,jkl->jil", np.swapaxes(R_t, -1, -2), R_g))
    angles = np.linalg.norm(logs, axis=1)
    max_angle = steps * _STEP_JOINT_CAP
    big = angles > max_angle
    if big.any():
        logs[big] *= (max_angle / angles[big])[:, None]

    out = []
    for k in range(1, steps + 1):
        s = k / steps
        Rk = np.einsum("jik,jkl->jil", R_t, so3_exp(s * logs))
        out.append(Pose._make(p_t.pelvis_position + s * dx, _m2e(Rk)))
    return out


def _unconditioned_actions(ctx: PolicyContext, cfg: PolicyConfig) -> list[Action]:
    # Decayed constant-velocity extrapolation of the last context action.
    if len(ctx.poses) >= 2:
        last = action_between(ctx.poses[-2], ctx.poses[-1])
    else:
        last = Action.zero()
    return [_clamp_action(_scale_action(last, 0.9 ** (i + 1))) for i in range(cfg.T)]


def _extrapolated_pose(ctx: PolicyContext, cfg: PolicyConfig, decay: float = 0.9) -> Pose:
    pose = ctx.current_pose
    if len(ctx.poses) < 2:
        return pose
    last = action_between(ctx.poses[-2], ctx.poses[-1])
    for i in range(cfg.T):
        pose = apply_action(pose, _clamp_action(_scale_action(last, decay ** (i + 1))))
    return pose


def _solve_reference(
    ctx: PolicyContext,
    cfg: PolicyConfig,
    targets: dict[str, np.ndarray],
    a_hl: WaypointSet,
    cam: Camera,
) -> Pose:
    """Hold reference for the goal solve.

    Starts from the context motion carried forward undecayed (a continued
    turn reaches the turned heading). When the targets imply a substantial
    move the pelvis yaw faces the direction of travel (people face where
    they are going); for near-stationary goals it instead turns toward the
    waypoints' mean image direction, so laterally placed waypoints read as
    "rotate that way" (a turn swings the hands with the torso)."""
    ref = _extrapolated_pose(ctx, cfg, decay=1.0)
    anchor = targets.get("Pelvis")
    if anchor is None:
        anchor = targets.get("Head")
    yaw = None
    if anchor is not None:
        disp = np.asarray(anchor)[:2] - ctx.current_pose.pelvis_position[:2]
        if np.linalg.norm(disp) >= 0.3:
            yaw = float(np.arctan2(disp[1], disp[0]))
    if yaw is None and len(a_hl):
        mean_u = float(np.mean([wp.u for wp in a_hl.entries.values()]))
        # +u is to the right of the view; turning right decreases world yaw
        yaw = float(ref.joint_angles[0, 0] - np.arctan2(mean_u, cam.focal))
    if yaw is not None:
        angles = ref.joint_angles.copy()
        angles[0, 0] = yaw
        ref = Pose(ref.pelvis_position, angles)
    return ref


def resolve_targets(
    a_hl: WaypointSet,
    ctx: PolicyContext,
    m: KinematicModel,
    cam: Camera,
    cfg: PolicyConfig,
    rng: np.random.Generator | None = None,
) -> dict[str, np.ndarray]:
    """Back-project every present waypoint to a world target.

    The pelvis target is resolved first so its depth can serve as the hint
    for joints whose own heuristic depth is uninformative. Targets are
    perturbed by zero-mean Gaussian noise of ``goal_noise_scale`` when an rng
    is supplied (the policy's stochastic sampling mode).
    """
    p_t = ctx.current_pose
    cam_pose = camera_pose_of(p_t, m, cam)
    positions = forward_kinematics(p_t, m)
    targets: dict[str, np.ndarray] = {}
    pelvis_goal = None
    pelvis_wp = a_hl.get("pelvis")
    if pelvis_wp is not None:
        pelvis_goal = backproject_waypoint(pelvis_wp, ctx, m, cam, cfg)
        targets[LEAF_TO_SKELETON["pelvis"]] = pelvis_goal
    for leaf in LEAF_JOINTS:
        if leaf == "pelvis":
            continue
        wp = a_hl.get(leaf)
        if wp is None:
            continue
        hint = None
        if pelvis_goal is not None and (cfg.depth_mode != "given-3d" or wp.depth is None):
            # Carry the joint's current height offset above the pelvis to the
            # pelvis target and use that point's depth as the hint.
            row = m.joint_index[LEAF_TO_SKELETON[leaf]]
            dz = positions[row][2] - positions[m.joint_index["Pelvis"]][2]
            hinted_point = pelvis_goal + np.array([0.0, 0.0, dz])
            hint = float(cam_pose.inverse_apply(hinted_point)[2])
        targets[LEAF_TO_SKELETON[leaf]] = backproject_waypoint(
            wp, ctx, m, cam, cfg, depth_hint=hint
        )
    if rng is not None and cfg.goal_noise_scale > 0:
        for name in sorted(targets):
            targets[name] = targets[name] + rng.normal(0.0, cfg.goal_noise_scale, size=3)
    return _clamp_hand_targets(targets, ctx, m, cfg)


def _clamp_hand_targets(
    targets: dict[str, np.ndarray],
    ctx: PolicyContext,
    m: KinematicModel,
    cfg: PolicyConfig,
) -> dict[str, np.ndarray]:
    """Pull hand targets inside the arm's reach of the implied body placement.

    A hand goal the arm cannot reach from wherever the body is heading would
    force an implausible pose; projecting it onto the reach sphere keeps the
    generated motion humanlike while preserving the target direction.
    """
    if not any(n in targets for n in ("R_Hand", "L_Hand")):
        return targets
    positions = forward_kinematics(ctx.current_pose, m)
    pelvis_row = m.joint_index["Pelvis"]
    base = targets.get("Pelvis")
    if base is None:
        carry = context_displacement(ctx, cfg.T)
        base = positions[pelvis_row] + (carry if carry is not None else 0.0)
    for hand, shoulder in (("R_Hand", "R_Shoulder"), ("L_Hand", "L_Shoulder")):
        if hand not in targets:
            continue
        arm_len = m.chain_length(hand) - m.chain_length(shoulder)
        shoulder_row = m.joint_index[shoulder]
        center = base + np.array(
            [0.0, 0.0, positions[shoulder_row][2] - positions[pelvis_row][2]]
        )
        d = targets[hand] - center
        dist = float(np.linalg.norm(d))
        if dist > arm_len:
            targets[hand] = center + d * (arm_len / dist)
    return targets


def generate_actions(
    ctx: PolicyContext,
    a_hl: WaypointSet,
    m: KinematicModel,
    cam: Camera,
    cfg: PolicyConfig | None = None,
    rng: np.random.Generator | None = None,
) -> list[Action]:
    """T low-level actions from the context and an (optionally empty) waypoint set.

    Deterministic when ``goal_noise_scale`` is 0 or no rng is given.
    """
    cfg = cfg or PolicyConfig()
    if a_hl.is_empty():
        return _unconditioned_actions(ctx, cfg)
    targets = resolve_targets(a_hl, ctx, m, cam, cfg, rng)
    p_t = ctx.current_pose
    # Anchor the solve on the context-extrapolated pose, so joints without a
    # waypoint continue the context motion instead of freezing in place
    # (waypoint-free body parts are inferred, mirroring masked training).
    reference = _solve_reference(ctx, cfg, targets, a_hl, cam)
    goal = solve_goal_pose(targets, reference, m, cfg)
    path = _interpolate_to(p_t, goal, cfg.T)
    actions = []
    prev = p_t
    for pose in path:
        actions.append(action_between(prev, pose))
        prev = pose
    return actions
