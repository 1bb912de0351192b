# toimit/solver - trajectory optimization over contact schedules
from toimit.solver.costs import CostStack, Feature
from toimit.solver.ddp import OptimalTrajectory, rollout, solve
from toimit.solver.feasibility import check_feasibility, static_hold_controls
from toimit.solver.schedule import ContactSchedule, Phase
from toimit.solver.targets import Subgoal, make_dense_targets, make_sparse_subgoals

__all__ = [
    "ContactSchedule",
    "CostStack",
    "Feature",
    "OptimalTrajectory",
    "Phase",
    "Subgoal",
    "check_feasibility",
    "make_dense_targets",
    "make_sparse_subgoals",
    "rollout",
    "solve",
    "static_hold_controls",
]
