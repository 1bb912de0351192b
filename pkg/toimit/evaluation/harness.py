# toimit/evaluation/harness.py - policy evaluation, torque-information ablation and terrain sweeps
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from toimit.dataset import DatasetRecord, generate_records, reference_at, task_seeds
from toimit.env import EVAL_CURRICULUM, ImitationEnv, RandomizationDraw, Terrain
from toimit.errors import CheckpointError, ConfigError, DimensionError
from toimit.evaluation.metrics import EpisodeTrace, summarize, summarize_metrics, trajectory_metrics
from toimit.rl import PolicyBundle, load_checkpoint
from toimit.schemas import (
    AblationCell,
    AblationConfig,
    AblationReport,
    EnvConfig,
    ReferenceChannels,
    SolverOptions,
    SuccessRateRow,
    SuccessRateTable,
    TrackingReport,
)
from toimit.tasks import sample_task, with_parameters


logger = logging.getLogger(__name__)

STEP_HEIGHTS_CM = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0)
SLOPES_DEG = (0.0, 2.5, 5.0, 7.5, 10.0, 12.5, 15.0)
STAIR_LENGTH = 0.30  # m per tread
STAIR_COUNT = 10
OBSTACLE_OFFSET = 0.15  # m ahead of the start pose
PITCH_PERTURBATION = 0.1  # rad, initial pitch drawn uniformly within +-


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def check_dimensions(policy: PolicyBundle, env: ImitationEnv) -> None:
    """
    Raises:
        DimensionError: If the policy was trained on another observation or action layout
    """
    if policy.actor_dim != env.actor_layout.size:
        raise DimensionError(
            f"Policy expects {policy.actor_dim} actor inputs, environment provides {env.actor_layout.size}"
        )
    if policy.critic_dim != env.critic_layout.size:
        raise DimensionError(
            f"Policy critic expects {policy.critic_dim} inputs, environment provides {env.critic_layout.size}"
        )
    if policy.action_dim != env.action_dim:
        raise DimensionError(f"Policy outputs {policy.action_dim} actions, environment takes {env.action_dim}")


def run_episode(
    env: ImitationEnv,
    policy: PolicyBundle,
    seed: int,
    record_index: int,
    terrain: Optional[Terrain] = None,
    pitch_offset: float = 0.0,
) -> EpisodeTrace:
    """One deterministic episode with zero observation noise and nominal physics."""
    check_dimensions(policy, env)
    env.set_curriculum(EVAL_CURRICULUM)
    observation = env.reset(
        seed=seed,
        record_index=record_index,
        terrain=terrain,
        pitch_offset=pitch_offset,
        draw=RandomizationDraw.nominal(),
    )
    trace = EpisodeTrace(ee_names=list(env.ee_sites))
    while True:
        action, _ = policy.act(observation.actor[None, :], deterministic=True)
        result = env.step(action[0])
        if "failure" in result.info:
            trace.terminated = True
            break
        t = min(env.step_count * env.policy_dt, env.record.duration)
        reference = reference_at(env.record, t)
        trace.append(env.measured(), env.reference_quantities(reference), env.reference_contact_active(reference))
        if result.done:
            trace.terminated = result.terminated
            break
        observation = result.observation
    return trace


# ============================================
# TRACKING
# ============================================


def evaluate_policy(
    policy: PolicyBundle,
    records: Sequence[DatasetRecord],
    env_config: Optional[EnvConfig] = None,
    trials: int = 20,
    seed: int = 0,
    jobs: int = 1,
    label: str = "policy",
) -> TrackingReport:
    """
    Track `trials` references (cycling through the records) and aggregate the errors.

    Raises:
        ValueError: If trials < 1 or there are no records
        DimensionError: If the policy does not fit the environment
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not records:
        raise ValueError("No reference records to evaluate on")
    records = list(records)
    env_config = env_config or EnvConfig()
    check_dimensions(policy, ImitationEnv(records, env_config))
    seeds = task_seeds(seed, trials)

    def trial(k: int):
        index = k % len(records)
        env = ImitationEnv(records, env_config, seed=seeds[k])
        return trajectory_metrics(run_episode(env, policy, seeds[k], index), record_index=index)

    rows = _map(trial, list(range(trials)), jobs)
    report = TrackingReport(
        policy=label, trials=trials, seed=seed, per_trajectory=rows, summary=summarize_metrics(rows)
    )
    logger.info(
        f"Evaluated {label} on {trials} trial(s): E_joint {report.summary['e_joint'].mean:.4f} rad, "
        f"E_ee_hand {report.summary['e_ee_hand'].mean:.3f} cm"
    )
    return report


# ============================================
# TORQUE-INFORMATION ABLATION
# ============================================


def variant_env_config(base: EnvConfig, variant: str) -> EnvConfig:
    return base.model_copy(update={"reference_channels": ReferenceChannels.from_variant(variant)})


def ablation_references(
    config: AblationConfig, jobs: int = 1, opts: Optional[SolverOptions] = None
) -> Dict[float, List[DatasetRecord]]:
    """
    Press references at each commanded force level.

    Every level reuses the same sampled desk, reach and timing draws so the
    levels differ only in the commanded force.

    Raises:
        ConfigError: If no reference at some level passes the feasibility gates
    """
    bases = [sample_task("press", s) for s in task_seeds(config.eval_seed, config.trajectories_per_level)]
    references = {}
    for level in config.force_levels:
        tasks = [with_parameters(task, normal_force=level) for task in bases]
        result = generate_records(tasks, jobs, opts)
        if not result.records:
            raise ConfigError(f"No feasible press reference at {level} N")
        references[level] = result.records
    return references


def load_variant_policies(variants: Sequence[str], checkpoints: Mapping[str, Path]) -> Dict[str, PolicyBundle]:
    """
    Raises:
        CheckpointError: If a variant has no checkpoint or it cannot be read
    """
    missing = [v for v in variants if v not in checkpoints]
    if missing:
        raise CheckpointError(f"Missing checkpoint for variant(s): {', '.join(missing)}")
    return {v: load_checkpoint(Path(checkpoints[v])) for v in variants}


def force_ablation(
    config: AblationConfig,
    references: Mapping[float, Sequence[DatasetRecord]],
    policies: Mapping[str, PolicyBundle],
    jobs: int = 1,
) -> AblationReport:
    """
    Force and hand-position errors of every variant at every commanded force level.

    All variants run the same references with the same seeds.
    """
    missing = [v for v in config.variants if v not in policies]
    if missing:
        raise CheckpointError(f"Missing policy for variant(s): {', '.join(missing)}")

    cells = []
    for level in config.force_levels:
        if level not in references or not references[level]:
            raise ConfigError(f"No references for force level {level} N")
        records = list(references[level])[:config.trajectories_per_level]
        seeds = task_seeds(config.eval_seed, len(records))

        for variant in config.variants:
            env_config = variant_env_config(config.train.env, variant)
            policy = policies[variant]

            def trial(k: int) -> EpisodeTrace:
                env = ImitationEnv(records, env_config, seed=seeds[k])
                return run_episode(env, policy, seeds[k], k)

            traces = _map(trial, list(range(len(records))), jobs)
            metrics = [trajectory_metrics(trace, k) for k, trace in enumerate(traces)]
            cells.append(
                AblationCell(
                    variant=variant,
                    force_level=level,
                    force_error=summarize([m.force_error for m in metrics]),
                    hand_error=summarize([m.e_ee_hand for m in metrics]),
                    force_profiles=[trace.normal_force_profile() for trace in traces],
                    reference_profile=traces[0].normal_force_profile(which="reference"),
                )
            )
            logger.info(
                f"Ablation {variant} at {level:g} N: force error {cells[-1].force_error.mean:.3f} "
                f"+- {cells[-1].force_error.sd:.3f} N"
            )

    return AblationReport(
        variants=list(config.variants), force_levels=list(config.force_levels), cells=cells, eval_seed=config.eval_seed
    )


def ablation_ordering(report: AblationReport) -> Dict[str, object]:
    """Average force error per variant and whether the Pos error grows with the commanded force."""
    averages = {
        v: float(np.mean([report.cell(v, level).force_error.mean for level in report.force_levels]))
        for v in report.variants
    }
    ordering = {"average_force_error": averages}
    if "Pos" in report.variants:
        errors = [report.cell("Pos", level).force_error.mean for level in sorted(report.force_levels)]
        ordering["pos_monotone"] = bool(all(b >= a for a, b in zip(errors, errors[1:])))
    return ordering


# ============================================
# TERRAIN SWEEP
# ============================================


def sweep_terrain(scenario: str, setting: float, start_x: float) -> Terrain:
    if scenario == "step-height":
        return Terrain.stairs(start_x + OBSTACLE_OFFSET, setting / 100.0, STAIR_LENGTH, STAIR_COUNT)
    if scenario == "slope":
        return Terrain.slope(start_x + OBSTACLE_OFFSET, np.deg2rad(setting))
    raise ValueError(f"Unknown terrain scenario '{scenario}'. Expected 'step-height' or 'slope'")


def terrain_sweep(
    policy: PolicyBundle,
    records: Sequence[DatasetRecord],
    scenario: str,
    env_config: Optional[EnvConfig] = None,
    trials: int = 10,
    seed: int = 0,
    settings: Optional[Sequence[float]] = None,
    jobs: int = 1,
) -> SuccessRateTable:
    """
    Success rate per terrain setting; success means the episode reached the end
    of its reference without a termination. Step heights are in cm, slopes in
    degrees; every setting reuses the same trial seeds and pitch perturbations.

    Raises:
        ValueError: If trials < 1 or the scenario is unknown
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if scenario not in ("step-height", "slope"):
        raise ValueError(f"Unknown terrain scenario '{scenario}'. Expected 'step-height' or 'slope'")
    if not records:
        raise ValueError("No reference records for the terrain sweep")
    records = list(records)
    env_config = env_config or EnvConfig()
    if settings is None:
        settings = STEP_HEIGHTS_CM if scenario == "step-height" else SLOPES_DEG
    unit = "cm" if scenario == "step-height" else "deg"

    seeds = task_seeds(seed, trials)
    offsets = [float(np.random.default_rng(s).uniform(-PITCH_PERTURBATION, PITCH_PERTURBATION)) for s in seeds]

    rows = []
    for setting in settings:
        def trial(k: int) -> bool:
            index = k % len(records)
            terrain = sweep_terrain(scenario, setting, float(records[index].q[0, 0]))
            env = ImitationEnv(records, env_config, seed=seeds[k])
            trace = run_episode(env, policy, seeds[k], index, terrain=terrain, pitch_offset=offsets[k])
            return not trace.terminated

        successes = sum(_map(trial, list(range(trials)), jobs))
        rows.append(SuccessRateRow(setting=float(setting), unit=unit, trials=trials, successes=int(successes)))
        logger.info(f"Terrain {scenario} {setting:g} {unit}: {successes}/{trials} successful")
    return SuccessRateTable(scenario=scenario, rows=rows)
