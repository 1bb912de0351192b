# toimit/tasks/library.py - packaged robot models, task sampling, contact schedules and start poses
import functools
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from toimit import parsers, schemas
from toimit.config import settings
from toimit.dynamics import RobotModel, RobotState
from toimit.dynamics.algorithms import site_kinematics
from toimit.errors import ConfigError, UnknownModelError, UnknownTaskError
from toimit.solver.schedule import ContactSchedule
from toimit.solver.targets import HAND, LEFT_FOOT, RIGHT_FOOT, press_contact_point


logger = logging.getLogger(__name__)

MODEL_IDS = ("pendulum", "double-integrator", "planar-biped-7dof", "planar-arm-3dof")
TASK_NAMES = ("walk", "stair", "press", "pickup-analog")
DURATION_FIELDS = ("swing_duration", "double_support_duration", "approach_duration", "press_duration")
INTEGER_FIELDS = ("n_steps",)
APPROACH_CLEARANCE = 0.08  # m above the desk at the start of a press


@functools.lru_cache(maxsize=None)
def build_model(model_id: str) -> RobotModel:
    """Load a packaged robot model by id."""
    path = settings.models_dir / f"{model_id}.yaml"
    if not path.is_file():
        raise UnknownModelError(f"Unknown model '{model_id}'. Available: {available_models()}")
    model = RobotModel.from_doc(parsers.load_model_doc(path))
    logger.debug(f"Built model '{model_id}' (n_v={model.n_v}, n_u={model.n_u}, hash {model.hash})")
    return model


def available_models() -> list:
    return sorted(p.stem for p in settings.models_dir.glob("*.yaml"))


@functools.lru_cache(maxsize=None)
def _task_library(path: Path) -> schemas.TaskLibraryDoc:
    return parsers.load_task_library(path)


def task_library(path: Optional[Path] = None) -> schemas.TaskLibraryDoc:
    return _task_library(Path(path) if path is not None else settings.tasks_dir / "ranges.yaml")


def sample_task(name: str, seed: int, library: Optional[schemas.TaskLibraryDoc] = None) -> schemas.TaskSpec:
    """
    Draw task parameters uniformly from the configured ranges.

    Durations are rounded to the task's dt grid. The same (name, seed) always
    yields the same TaskSpec.
    """
    library = library or task_library()
    if name not in library.tasks:
        raise UnknownTaskError(f"Unknown task '{name}'. Available: {sorted(library.tasks)}")
    entry = library.tasks[name]

    rng = np.random.default_rng(seed)
    values = {}
    horizon = None
    for key, value in entry.fixed.items():
        if key == "horizon":
            horizon = float(value)
        elif key in INTEGER_FIELDS:
            values[key] = int(value)
        else:
            values[key] = float(value)

    for key in sorted(entry.ranges):
        bounds = entry.ranges[key]
        draw = float(rng.uniform(bounds.low, bounds.high))
        if key in DURATION_FIELDS:
            draw = max(1, int(round(draw / entry.dt))) * entry.dt
        values[key] = draw

    try:
        parameters = schemas.TaskParameters(**values)
        durations = _durations(name, parameters, horizon)
        return schemas.TaskSpec(
            name=name,
            model_id=entry.model_id,
            horizon=round(sum(durations), 9),
            dt=entry.dt,
            parameters=parameters,
            seed=seed,
        )
    except ValueError as e:
        raise ConfigError(f"Task '{name}' seed {seed}: sampled parameters are invalid: {e}") from e


def _durations(name: str, p: schemas.TaskParameters, horizon: Optional[float]) -> list:
    if name in ("walk", "stair"):
        return [p.double_support_duration] + [p.swing_duration, p.double_support_duration] * p.n_steps
    if name == "press":
        return [p.approach_duration, p.press_duration]
    if horizon is None:
        raise ConfigError(f"Task '{name}' needs a fixed horizon")
    return [horizon]


def contact_schedule(task: schemas.TaskSpec) -> ContactSchedule:
    """Predefined contact phases of a task."""
    p = task.parameters
    if task.name in ("walk", "stair"):
        phases = [(p.double_support_duration, (LEFT_FOOT, RIGHT_FOOT))]
        for step in range(1, p.n_steps + 1):
            stance = LEFT_FOOT if step % 2 == 1 else RIGHT_FOOT
            phases.append((p.swing_duration, (stance,)))
            phases.append((p.double_support_duration, (LEFT_FOOT, RIGHT_FOOT)))
        return ContactSchedule.build(phases, task.dt)

    if task.name == "press":
        return ContactSchedule.build([(p.approach_duration, ()), (p.press_duration, (HAND,))], task.dt)

    if task.name == "pickup-analog":
        return ContactSchedule.build([(task.horizon, (LEFT_FOOT, RIGHT_FOOT))], task.dt)

    raise UnknownTaskError(f"No contact schedule for task '{task.name}'")


def solve_ik(model: RobotModel, site: str, target: np.ndarray, q_init: np.ndarray, iterations: int = 100) -> np.ndarray:
    """Damped least-squares inverse kinematics for one site, clamped to the joint limits."""
    q = np.array(q_init, dtype=float)
    actuated = list(model.actuated)
    for _ in range(iterations):
        position, _, J = site_kinematics(model, RobotState(q=q, v=np.zeros(model.n_v)), site)
        error = np.asarray(target) - position
        if np.max(np.abs(error)) < 1e-10:
            break
        Ja = J[:, actuated]
        dq = Ja.T @ np.linalg.solve(Ja @ Ja.T + 1e-6 * np.eye(2), error)
        q[actuated] = np.clip(q[actuated] + dq, model.joint_lower, model.joint_upper)
    return q


def initial_state(task: schemas.TaskSpec, model: Optional[RobotModel] = None) -> RobotState:
    """Start pose at rest: the nominal stance, or the hand hovering above the desk contact point."""
    model = model or build_model(task.model_id)
    state = model.default_state()
    if task.name != "press":
        return state

    target = press_contact_point(task, model) + np.array([0.0, APPROACH_CLEARANCE])
    q = solve_ik(model, HAND, target, state.q)
    return RobotState(q=q, v=np.zeros(model.n_v))


def with_parameters(
    task: schemas.TaskSpec, dt: Optional[float] = None, horizon: Optional[float] = None, **updates
) -> schemas.TaskSpec:
    """
    Copy of a task with some parameters replaced; the horizon follows the new phase durations.

    `horizon` may only be set for pickup-analog, whose single phase has no
    duration parameter of its own.
    """
    unknown = set(updates) - set(schemas.TaskParameters.model_fields)
    if unknown:
        raise ConfigError(f"Unknown task parameter(s): {sorted(unknown)}")
    if horizon is not None and task.name != "pickup-analog":
        raise ConfigError(f"Task '{task.name}': the horizon follows the phase durations and cannot be set")
    try:
        parameters = schemas.TaskParameters(**{**task.parameters.model_dump(), **updates})
        if task.name == "pickup-analog":
            horizon = horizon if horizon is not None else task.horizon
        return schemas.TaskSpec(
            name=task.name,
            model_id=task.model_id,
            horizon=round(sum(_durations(task.name, parameters, horizon)), 9),
            dt=dt if dt is not None else task.dt,
            parameters=parameters,
            seed=task.seed,
        )
    except ValueError as e:
        raise ConfigError(f"Task '{task.name}': invalid parameter override: {e}") from e


def task_from_config(config: schemas.SolveConfig) -> schemas.TaskSpec:
    """
    The task a solve config describes: a sampled task with the config's
    dt, horizon and parameter values laid over it.

    Raises:
        ConfigError: If the config names no task or its overrides are invalid
    """
    if config.task is None:
        raise ConfigError("solve needs a task, from --task or the config's `task` key")
    task = sample_task(config.task, config.seed if config.seed is not None else 0)
    if config.dt is None and config.horizon is None and not config.parameters:
        return task
    return with_parameters(task, dt=config.dt, horizon=config.horizon, **config.parameters)
