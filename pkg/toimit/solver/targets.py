# toimit/solver/targets.py - dense gait targets and sparse subgoal cost stacks built from task specs
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from toimit.dynamics import RobotModel
from toimit.dynamics.algorithms import site_positions
from toimit.errors import ConfigError
from toimit.schemas import CostWeights, TaskSpec
from toimit.solver.costs import CostStack, Feature


logger = logging.getLogger(__name__)

LEFT_FOOT = "left_foot"
RIGHT_FOOT = "right_foot"
HAND = "hand"

# Base coordinates of a floating model
BASE_X, BASE_Z, BASE_PITCH = 0, 1, 2


def phase_knots(task: TaskSpec) -> List[int]:
    return [int(round(d / task.dt)) for d in task.phase_durations()]


def n_knots(task: TaskSpec) -> int:
    return sum(phase_knots(task)) + 1


def cycloid(s: float, start: Sequence[float], end: Sequence[float], height: float) -> np.ndarray:
    """
    Cycloidal swing profile at phase s in [0, 1].

    Horizontal and vertical displacement follow s - sin(2 pi s) / (2 pi); the
    clearance bump (1 - cos(2 pi s)) / 2 peaks at `height` for s = 0.5.
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    blend = s - np.sin(2.0 * np.pi * s) / (2.0 * np.pi)
    point = start + (end - start) * blend
    point[1] += height * (1.0 - np.cos(2.0 * np.pi * s)) / 2.0
    return point


def step_length(task: TaskSpec) -> float:
    p = task.parameters
    if p.step_length is not None:
        return p.step_length
    return p.speed * (p.swing_duration + p.double_support_duration)


# ============================================
# GAIT PLAN
# ============================================


@dataclass
class FootPlan:
    """Per-knot foot targets and the swing foot of each step."""
    left: np.ndarray  # (n_knots, 2)
    right: np.ndarray
    swing_feet: List[str]
    landings: List[Tuple[float, float]]  # landing point of each step, in step order


def plan_feet(task: TaskSpec, x_start: float = 0.0) -> FootPlan:
    """
    Foot trajectories for walk/stair tasks.

    Both feet start together at (x_start, 0). Step i (1-based) moves the right
    foot on odd steps and the left foot on even steps, landing at
    x_start + i * L and height i * riser.
    """
    if task.name not in ("walk", "stair"):
        raise ConfigError(f"Task '{task.name}' has no gait plan")

    p = task.parameters
    L = step_length(task)
    riser = p.stair_riser if task.name == "stair" else 0.0
    knots = phase_knots(task)
    total = sum(knots) + 1

    feet: Dict[str, np.ndarray] = {LEFT_FOOT: np.zeros(2) + [x_start, 0.0], RIGHT_FOOT: np.zeros(2) + [x_start, 0.0]}
    tracks = {LEFT_FOOT: np.zeros((total, 2)), RIGHT_FOOT: np.zeros((total, 2))}
    swing_feet, landings = [], []

    k = 0
    for phase_index, steps in enumerate(knots):
        is_swing = phase_index % 2 == 1
        if not is_swing:
            for j in range(steps + 1):
                for name in tracks:
                    tracks[name][k + j] = feet[name]
            k += steps
            continue

        step_number = (phase_index + 1) // 2
        swing = RIGHT_FOOT if step_number % 2 == 1 else LEFT_FOOT
        stance = LEFT_FOOT if swing == RIGHT_FOOT else RIGHT_FOOT
        start = feet[swing].copy()
        end = np.array([x_start + step_number * L, step_number * riser])
        for j in range(steps + 1):
            tracks[swing][k + j] = cycloid(j / steps, start, end, p.step_height)
            tracks[stance][k + j] = feet[stance]
        feet[swing] = end
        swing_feet.append(swing)
        landings.append((float(end[0]), float(end[1])))
        k += steps

    return FootPlan(tracks[LEFT_FOOT], tracks[RIGHT_FOOT], swing_feet, landings)


# ============================================
# DENSE TARGETS
# ============================================


def make_dense_targets(
    task: TaskSpec, model: RobotModel, weights: Optional[CostWeights] = None
) -> CostStack:
    """
    Per-knot tracking targets for walk and stair tasks.

    Both feet are tracked at every knot (the stance foot at its fixed contact
    point, the swing foot along a cycloid). The base follows the commanded
    forward speed, a height of nominal + mean foot height, and zero pitch.
    """
    w = weights or CostWeights()
    total = n_knots(task)
    q0 = model.default_state().q
    plan = plan_feet(task, x_start=float(site_positions(model, q0, [LEFT_FOOT])[0, 0]))
    if plan.left.shape[0] != total:
        raise ConfigError(f"Foot plan has {plan.left.shape[0]} knots, horizon needs {total}")

    terminal = np.ones(total)
    terminal[-1] = w.terminal_scale
    costs = CostStack.empty(model, total, w)

    for name, track in ((LEFT_FOOT, plan.left), (RIGHT_FOOT, plan.right)):
        costs.add_term(Feature("site_x", name), track[:, 0], w.site_tracking * terminal)
        costs.add_term(Feature("site_z", name), track[:, 1], w.site_tracking * terminal)

    nominal_z = q0[BASE_Z]
    mean_foot_z = 0.5 * (plan.left[:, 1] + plan.right[:, 1])
    costs.add_term(Feature("v", index=BASE_X), np.full(total, task.parameters.speed), w.base_tracking * terminal)
    costs.add_term(Feature("q", index=BASE_Z), nominal_z + mean_foot_z, w.base_tracking * terminal)
    costs.add_term(Feature("q", index=BASE_PITCH), np.zeros(total), w.base_tracking * terminal)

    for column, index in enumerate(model.actuated):
        costs.add_term(Feature("q", index=index), np.full(total, model.default_joint_pos[column]), w.posture)

    return costs


# ============================================
# SPARSE SUBGOALS
# ============================================


@dataclass(frozen=True)
class Subgoal:
    knot: int
    feature: Feature
    target: float
    weight: Optional[float] = None  # defaults to the tracking weight of the feature kind


def press_contact_point(task: TaskSpec, model: RobotModel) -> np.ndarray:
    """Desk contact point: nominal hand x shifted by the reach offset, at desk height."""
    hand = site_positions(model, model.default_state().q, [HAND])[0]
    return np.array([hand[0] + task.parameters.reach_offset, task.parameters.desk_height])


def default_subgoals(task: TaskSpec, model: RobotModel) -> List[Subgoal]:
    last = n_knots(task) - 1
    if task.name == "press":
        contact = press_contact_point(task, model)
        touch = phase_knots(task)[0]
        goals = []
        for knot in (touch, last):
            goals.append(Subgoal(knot, Feature("site_x", HAND), float(contact[0])))
            goals.append(Subgoal(knot, Feature("site_z", HAND), float(contact[1])))
        return goals

    if task.name == "pickup-analog":
        q0 = model.default_state().q
        mid = last // 2
        return [
            Subgoal(mid, Feature("q", index=BASE_Z), float(q0[BASE_Z] - task.parameters.squat_depth)),
            Subgoal(last, Feature("q", index=BASE_Z), float(q0[BASE_Z])),
            Subgoal(last, Feature("q", index=BASE_X), float(q0[BASE_X])),
            Subgoal(last, Feature("q", index=BASE_PITCH), 0.0),
        ]

    raise ConfigError(f"Task '{task.name}' has no default subgoals; use dense targets")


def make_sparse_subgoals(
    task: TaskSpec,
    model: RobotModel,
    subgoals: Optional[Sequence[Subgoal]] = None,
    weights: Optional[CostWeights] = None,
) -> CostStack:
    """
    Cost stack with tracking weight only at subgoal knots.

    A subgoal at the final knot is weighted by terminal_scale (the Q_f rows).
    Press tasks add a contact-force tracking term toward the commanded normal
    force (and zero tangential force) on every pressing interval.

    Raises:
        ConfigError: If a subgoal knot lies beyond the horizon
    """
    w = weights or CostWeights()
    total = n_knots(task)
    goals = list(subgoals) if subgoals is not None else default_subgoals(task, model)

    costs = CostStack.empty(model, total, w)
    columns: Dict[Feature, int] = {}
    for goal in goals:
        if not 0 <= goal.knot < total:
            raise ConfigError(f"Subgoal knot {goal.knot} is beyond the horizon ({total} knots)")
        if goal.feature not in columns:
            costs.add_term(goal.feature, np.zeros(total), np.zeros(total))
            columns[goal.feature] = len(costs.features) - 1

        column = columns[goal.feature]
        base = goal.weight
        if base is None:
            base = w.site_tracking if goal.feature.kind.startswith("site") else w.base_tracking
        scale = w.terminal_scale if goal.knot == total - 1 else 1.0
        costs.targets[goal.knot, column] = goal.target
        costs.weights[goal.knot, column] = base * scale

    if task.name == "press":
        press_weights = np.zeros(total)
        press_weights[phase_knots(task)[0]:total - 1] = w.force_tracking
        costs.add_term(Feature("force_n", HAND), np.full(total, task.parameters.normal_force), press_weights)
        costs.add_term(Feature("force_t", HAND), np.zeros(total), press_weights)

    return costs
