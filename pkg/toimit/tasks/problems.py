# toimit/tasks/problems.py - turns a TaskSpec into a trajectory optimization problem and solves it
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from toimit.dynamics import RobotModel, RobotState
from toimit.schemas import CostWeights, FeasibilityReport, SolverOptions, TaskSpec
from toimit.solver import (
    ContactSchedule,
    CostStack,
    OptimalTrajectory,
    check_feasibility,
    make_dense_targets,
    make_sparse_subgoals,
    solve,
    static_hold_controls,
)
from toimit.solver.targets import HAND
from toimit.tasks.library import build_model, contact_schedule, initial_state


logger = logging.getLogger(__name__)


@dataclass
class Problem:
    task: TaskSpec
    model: RobotModel
    schedule: ContactSchedule
    costs: CostStack
    x0: RobotState
    us_init: np.ndarray


def warm_start(task: TaskSpec, model: RobotModel, schedule: ContactSchedule, x0: RobotState) -> np.ndarray:
    """Static-hold torques at the start pose for every interval's contact set."""
    cache = {}
    rows = []
    for k in range(schedule.n_intervals):
        active = schedule.active_at(k)
        if active not in cache:
            desired = None
            if task.name == "press" and HAND in active:
                desired = np.array([0.0, task.parameters.normal_force])
            cache[active] = static_hold_controls(model, x0, active, desired)
        rows.append(cache[active])
    return np.array(rows).reshape(schedule.n_intervals, model.n_u)


def build_problem(task: TaskSpec, weights: Optional[CostWeights] = None) -> Problem:
    """
    Assemble model, schedule, costs, start state and warm start for a task.

    Walk and stair tasks track dense gait targets; press and pickup-analog
    tasks use sparse subgoals.
    """
    model = build_model(task.model_id)
    schedule = contact_schedule(task)
    if task.name in ("walk", "stair"):
        costs = make_dense_targets(task, model, weights)
    else:
        costs = make_sparse_subgoals(task, model, weights=weights)
    x0 = initial_state(task, model)
    return Problem(task, model, schedule, costs, x0, warm_start(task, model, schedule, x0))


def solve_task(
    task: TaskSpec,
    opts: Optional[SolverOptions] = None,
    weights: Optional[CostWeights] = None,
) -> Tuple[Problem, OptimalTrajectory, FeasibilityReport]:
    """Build and solve a task, then run the feasibility gates on the result."""
    problem = build_problem(task, weights)
    traj = solve(problem.model, problem.schedule, problem.costs, problem.x0, opts, problem.us_init)
    report = check_feasibility(traj, problem.model, problem.costs)

    label = f"{task.name} (seed {task.seed})"
    if not traj.converged:
        logger.warning(f"Solve of {label} did not converge after {traj.iterations} iterations")
    elif not report.passed:
        logger.warning(f"Solve of {label} failed feasibility gates: {'; '.join(report.reasons)}")
    else:
        logger.info(f"Solved {label}: cost {traj.cost:.6g} in {traj.iterations} iterations")
    return problem, traj, report
