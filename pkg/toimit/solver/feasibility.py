# toimit/solver/feasibility.py - acceptance gates for solved trajectories, static-hold warm starts
import logging
from typing import Optional, Sequence

import numpy as np

from toimit.dynamics import CONTACT_DIM, RobotModel, RobotState
from toimit.dynamics.algorithms import bias_forces, contact_jacobian
from toimit.schemas import FeasibilityReport
from toimit.solver.costs import CostStack
from toimit.solver.ddp import OptimalTrajectory, clamp_controls, step


logger = logging.getLogger(__name__)

NORMAL_FORCE_GATE = -1e-6  # N
DEFECT_GATE = 1e-6
IMPACT_VELOCITY_GATE = 1e-8  # m/s
TORQUE_GATE = 1e-9  # N m
FRICTION_GATE_FRACTION = 1e-3  # of mu * m * g


def check_feasibility(traj: OptimalTrajectory, model: RobotModel, costs: CostStack) -> FeasibilityReport:
    """
    Measure limit, friction, unilateral, dynamics and impact violations of a trajectory.

    Args:
        traj: Solved trajectory
        model: Model it was solved with
        costs: Cost stack it was solved with (supplies mu)

    Returns:
        FeasibilityReport with `passed` set from the acceptance gates
    """
    schedule = traj.schedule
    names = model.site_names

    joints = traj.q[:, list(model.actuated)]
    joint_violation = float(np.max(
        np.maximum(0.0, np.maximum(model.joint_lower - joints, joints - model.joint_upper)), initial=0.0
    ))
    torque_violation = float(np.max(np.maximum(0.0, np.abs(traj.u) - model.torque_limits), initial=0.0))

    friction = 0.0
    normals = []
    for k in range(schedule.n_intervals):
        for i, name in enumerate(names):
            if not traj.contact_mask[k, i]:
                continue
            f_t, f_n = traj.forces[k, CONTACT_DIM * i:CONTACT_DIM * (i + 1)]
            friction = max(friction, abs(f_t) - costs.mu * f_n)
            normals.append(f_n)
    friction = max(friction, 0.0)
    min_normal = float(min(normals)) if normals else None

    xs = traj.states()
    defect = 0.0
    for k in range(schedule.n_intervals):
        x_next, _, _ = step(model, schedule, k, xs[k], traj.u[k])
        defect = max(defect, float(np.max(np.abs(xs[k + 1] - x_next))))

    impact_velocity = 0.0
    for k in schedule.impact_knots:
        state = RobotState(q=traj.q[k], v=traj.v[k])
        J, _ = contact_jacobian(model, state, schedule.active_at(k))
        impact_velocity = max(impact_velocity, float(np.max(np.abs(J @ traj.v[k]))))

    friction_gate = FRICTION_GATE_FRACTION * costs.mu * model.total_mass * model.gravity

    reasons = []
    if min_normal is not None and min_normal < NORMAL_FORCE_GATE:
        reasons.append(f"min normal force {min_normal:.3g} N below {NORMAL_FORCE_GATE:g} N")
    if friction > friction_gate:
        reasons.append(f"friction residual {friction:.3g} N above gate {friction_gate:.3g} N")
    if defect >= DEFECT_GATE:
        reasons.append(f"dynamics defect {defect:.3g} above {DEFECT_GATE:g}")
    if impact_velocity >= IMPACT_VELOCITY_GATE:
        reasons.append(f"post-impact site velocity {impact_velocity:.3g} m/s above {IMPACT_VELOCITY_GATE:g}")
    if torque_violation > TORQUE_GATE:
        reasons.append(f"torque limit exceeded by {torque_violation:.3g} N m")

    return FeasibilityReport(
        max_joint_limit_violation=joint_violation,
        max_torque_limit_violation=torque_violation,
        max_friction_residual=float(friction),
        min_normal_force=min_normal,
        max_dynamics_defect=defect,
        max_impact_velocity=impact_velocity,
        friction_gate=friction_gate,
        passed=not reasons,
        reasons=reasons,
    )


def static_hold_controls(
    model: RobotModel,
    state: RobotState,
    sites: Sequence[str] = (),
    desired_forces: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Joint torques that hold a pose against gravity.

    With contact sites and no desired forces, torques and contact forces are
    chosen jointly in the least-squares sense; with desired forces the contact
    forces are fixed and only the torques are solved for.
    """
    rest = RobotState(q=state.q, v=np.zeros(model.n_v))
    gravity = bias_forces(model, rest)
    B = np.asarray(model.B)

    if not sites:
        u = np.linalg.lstsq(B, gravity, rcond=None)[0]
        return clamp_controls(model, u)

    J, _ = contact_jacobian(model, rest, sites)
    if desired_forces is not None:
        u = np.linalg.lstsq(B, gravity - J.T @ np.asarray(desired_forces, dtype=float), rcond=None)[0]
    else:
        z = np.linalg.lstsq(np.hstack([B, J.T]), gravity, rcond=None)[0]
        u = z[:model.n_u]
    return clamp_controls(model, u)
