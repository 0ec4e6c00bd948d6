"""waylift: egocentric waypoint control at desk scale.

An articulated 15-joint upper body with 48-dim joint actions, a simulated
egocentric world model, a waypoint-conditioned policy, and CEM planning in
both the raw joint action space and the lifted 8-dim waypoint space.
"""

from .camera import Camera, RigidTransform, Waypoint, WaypointSet
from .cem import CemConfig, PlanResult, cem_plan, observation_cost, sample_mean_init
from .kinematics import (
    JOINT_NAMES,
    LEAF_JOINTS,
    Action,
    KinematicModel,
    Pose,
    action_between,
    apply_action,
    default_model,
    forward_kinematics,
)
from .lifted import LwmRollout, lwm_rollout, rollout_chain
from .policy import (
    PolicyConfig,
    PolicyContext,
    backproject_waypoint,
    generate_actions,
    sample_mask,
    solve_goal_pose,
)
from .rotations import euler_to_matrix, matrix_to_euler
from .world import (
    Observation,
    Scene,
    WorldModelState,
    corridor,
    generate_trajectory,
    random_room,
    render_observation,
    wm_step,
)

__version__ = "0.1.0"
