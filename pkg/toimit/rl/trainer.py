# toimit/rl/trainer.py - training loop: collect, update, curriculum, checkpoints, learning curve
import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from toimit.dataset import DatasetRecord, read_dataset, split_holdout
from toimit.env import ImitationEnv, curriculum_update
from toimit.env.rewards import ALL_TERMS
from toimit.errors import ConfigError, DimensionError
from toimit.rl.checkpoint import load_training_state, save_checkpoint
from toimit.rl.network import Adam
from toimit.rl.policy import PolicyBundle
from toimit.rl.ppo import VectorEnv, collect, ppo_update
from toimit.schemas import EnvConfig, TrainConfig


logger = logging.getLogger(__name__)

CURVE_FIELDS = (
    ["iteration", "progress", "mean_reward", "task_reward", "episode_task_reward", "episodes"]
    + [f"reward_{name}" for name in ALL_TERMS]
    + ["policy_loss", "value_loss", "entropy", "approx_kl", "clip_fraction", "noise_scale", "penalty_scale"]
)


@dataclass
class TrainResult:
    policy: PolicyBundle
    curve: List[dict]
    train_records: List[DatasetRecord]
    holdout_records: List[DatasetRecord]
    checkpoints: List[Path]
    optimizer: Adam
    rng: np.random.Generator


def load_training_records(config: TrainConfig) -> List[DatasetRecord]:
    """Dataset records for a training run, filtered to the configured task."""
    path = Path(config.dataset)
    if not path.is_file():
        raise ConfigError(f"Dataset not found: {path}")
    records = read_dataset(path)
    if config.task is not None:
        records = [r for r in records if r.task.name == config.task]
    if not records:
        raise ConfigError(f"Dataset {path} has no records for task '{config.task}'")
    return records


def build_envs(records: Sequence[DatasetRecord], env_config: EnvConfig, seeds: Sequence[int]) -> List[ImitationEnv]:
    return [ImitationEnv(records, env_config, seed=int(s)) for s in seeds]


def _seeds(entropy, count: int) -> List[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(entropy).spawn(count)]


def train(
    config: TrainConfig,
    out_dir: Path,
    records: Optional[Sequence[DatasetRecord]] = None,
    resume: Optional[Path] = None,
) -> TrainResult:
    """
    Alternate rollout collection and PPO updates for `iterations` rounds.

    Writes learning_curve.csv, holdout.json and periodic checkpoints under
    out_dir; the final policy is saved as policy.ckpt. Every checkpoint carries
    the optimizer, generator and curriculum state.

    With `resume`, training continues from that checkpoint's iteration with its
    policy, optimizer and generator. Episodes in flight are not saved, so the
    environments restart from fresh episodes seeded by (seed, iteration).

    Raises:
        ConfigError: If the dataset is unusable or the checkpoint has nothing left to train
        DimensionError: If the resumed policy does not fit the configured observation layout
        CheckpointError: If the resume checkpoint cannot be read
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = list(records) if records is not None else load_training_records(config)
    train_records, holdout = split_holdout(records, config.holdout_fraction, config.seed)
    held_indices = [i for i, r in enumerate(records) if any(r is h for h in holdout)]
    (out_dir / "holdout.json").write_text(json.dumps({"indices": held_indices}, indent=2), encoding="utf-8")

    start = 0
    state = None
    if resume is not None:
        state = load_training_state(Path(resume))
        start = state.policy.iteration
        if start >= config.iterations:
            raise ConfigError(f"Checkpoint {resume} is at iteration {start}; nothing left of {config.iterations}")

    seeds = _seeds(config.seed if start == 0 else (config.seed, start), config.num_envs + 2)
    envs = build_envs(train_records, config.env, seeds[:config.num_envs])
    vec = VectorEnv(envs)
    if state is None:
        policy = PolicyBundle.create(
            envs[0].actor_layout.size, envs[0].critic_layout.size, envs[0].action_dim, config.ppo, seeds[-2]
        )
        optimizer = Adam(policy.actor.params + policy.critic.params + [policy.log_std], config.ppo.learning_rate)
        rng = np.random.default_rng(seeds[-1])
    else:
        policy, optimizer, rng = state.policy, state.optimizer, state.rng
        expected = (envs[0].actor_layout.size, envs[0].critic_layout.size, envs[0].action_dim)
        if (policy.actor_dim, policy.critic_dim, policy.action_dim) != expected:
            raise DimensionError(
                f"Checkpoint {resume} has (actor, critic, action) sizes "
                f"{(policy.actor_dim, policy.critic_dim, policy.action_dim)}, environment needs {expected}"
            )
        logger.info(f"Resuming from {resume} at iteration {start}")

    logger.info(
        f"Training on {len(train_records)} record(s) ({len(holdout)} held out), "
        f"{config.num_envs} env(s) x {config.steps_per_env} steps, {config.iterations} iteration(s)"
    )

    curve, checkpoints = [], []
    curve_path = out_dir / "learning_curve.csv"
    with open(curve_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=CURVE_FIELDS)
        writer.writeheader()

        for iteration in range(start, config.iterations):
            progress = iteration / config.iterations
            curriculum = curriculum_update(progress, config.env.curriculum)
            for env in envs:
                env.set_curriculum(curriculum)

            batch = collect(vec, policy, config.steps_per_env, rng)
            stats = ppo_update(policy, batch, config.ppo, optimizer, rng)
            policy.iteration = iteration + 1
            policy.progress = (iteration + 1) / config.iterations

            episodes = batch.episode_task_rewards
            row = {
                "iteration": iteration,
                "progress": progress,
                "mean_reward": float(batch.rewards.mean()),
                "task_reward": batch.task_reward,
                "episode_task_reward": float(np.mean(episodes)) if episodes else math.nan,
                "episodes": len(episodes),
                **{f"reward_{name}": value for name, value in batch.reward_terms.items()},
                "policy_loss": stats.policy_loss,
                "value_loss": stats.value_loss,
                "entropy": stats.entropy,
                "approx_kl": stats.approx_kl,
                "clip_fraction": stats.clip_fraction,
                "noise_scale": curriculum.noise_scale,
                "penalty_scale": curriculum.penalty_scale,
            }
            writer.writerow(row)
            curve.append(row)

            if (iteration + 1) % config.checkpoint_every == 0:
                path = out_dir / "checkpoints" / f"iter_{iteration + 1:05d}.ckpt"
                saved = curriculum_update(policy.progress, config.env.curriculum)
                checkpoints.append(save_checkpoint(policy, path, optimizer, rng, saved))
            if iteration % 10 == 0 or iteration == config.iterations - 1:
                logger.info(
                    f"Iteration {iteration}: reward {row['mean_reward']:.4f}, task {row['task_reward']:.4f}, "
                    f"KL {stats.approx_kl:.4g}, clip {stats.clip_fraction:.3f}"
                )

    final = curriculum_update(policy.progress, config.env.curriculum)
    checkpoints.append(save_checkpoint(policy, out_dir / "policy.ckpt", optimizer, rng, final))
    return TrainResult(policy, curve, train_records, holdout, checkpoints, optimizer, rng)
