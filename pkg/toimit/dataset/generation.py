# toimit/dataset/generation.py - solve many sampled tasks into reference records
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from toimit.dataset.trjd import DatasetRecord
from toimit.errors import NumericError
from toimit.schemas import SolverOptions, TaskSpec
from toimit.tasks import sample_task, solve_task


logger = logging.getLogger(__name__)


@dataclass
class DroppedTask:
    index: int
    task: TaskSpec
    reason: str


@dataclass
class GenerationResult:
    records: List[DatasetRecord] = field(default_factory=list)
    failures: List[DroppedTask] = field(default_factory=list)

    @property
    def attempted(self) -> int:
        return len(self.records) + len(self.failures)

    @property
    def failure_rate(self) -> float:
        return len(self.failures) / self.attempted if self.attempted else 0.0


def task_seeds(seed: int, count: int) -> List[int]:
    """Independent per-trajectory seeds derived from one master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


def _solve_one(task: TaskSpec, opts: Optional[SolverOptions]) -> Tuple[Optional[DatasetRecord], str]:
    try:
        problem, traj, report = solve_task(task, opts)
    except NumericError as e:
        return None, f"numeric failure: {e}"
    if not traj.converged:
        return None, f"not converged after {traj.iterations} iterations"
    if not report.passed:
        return None, "feasibility gates: " + "; ".join(report.reasons)
    return DatasetRecord.from_trajectory(task, problem.model, traj, report), ""


def generate_records(
    tasks: Sequence[TaskSpec], jobs: int = 1, opts: Optional[SolverOptions] = None
) -> GenerationResult:
    """
    Solve every task and keep the converged, gate-passing trajectories.

    Results keep the order of `tasks` whatever the worker count.
    """
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_solve_one, tasks, [opts] * len(tasks)))
    else:
        outcomes = [_solve_one(task, opts) for task in tasks]

    result = GenerationResult()
    for index, (task, (record, reason)) in enumerate(zip(tasks, outcomes)):
        if record is None:
            logger.warning(f"Dropped {task.name} #{index} (seed {task.seed}): {reason}")
            result.failures.append(DroppedTask(index, task, reason))
        else:
            result.records.append(record)
    logger.info(f"Generated {len(result.records)}/{len(tasks)} trajectories ({len(result.failures)} dropped)")
    return result


def generate_dataset(
    task_name: str, count: int, seed: int, jobs: int = 1, opts: Optional[SolverOptions] = None
) -> GenerationResult:
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    tasks = [sample_task(task_name, s) for s in task_seeds(seed, count)]
    return generate_records(tasks, jobs, opts)
