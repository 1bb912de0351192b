# toimit/tasks - robot models and task definitions
from toimit.tasks.library import (
    MODEL_IDS,
    TASK_NAMES,
    build_model,
    contact_schedule,
    initial_state,
    sample_task,
    task_from_config,
    with_parameters,
)
from toimit.tasks.problems import Problem, build_problem, solve_task

__all__ = [
    "MODEL_IDS",
    "TASK_NAMES",
    "Problem",
    "build_model",
    "build_problem",
    "contact_schedule",
    "initial_state",
    "sample_task",
    "solve_task",
    "task_from_config",
    "with_parameters",
]
