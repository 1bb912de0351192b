# toimit/rl/checkpoint.py - versioned decimal-text policy checkpoints
"""
Checkpoint layout:

    TOIMIT-CKPT v1
    <one-line JSON: network sizes, iteration, progress, normalizer counts>
    block <name> <rows> <cols>
    <rows lines of cols numbers, 17 significant digits>
    ...

Checkpoints written by the trainer also carry the training state: Adam
moments (`adam.m.<i>`, `adam.v.<i>` blocks), the Adam step, the rollout
generator state and the curriculum scales at save time.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from toimit.env.randomization import CurriculumState
from toimit.errors import CheckpointError
from toimit.rl.network import MLP, Adam, RunningNormalizer
from toimit.rl.policy import PolicyBundle


logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "TOIMIT-CKPT"
CHECKPOINT_VERSION = 1


@dataclass
class TrainingState:
    """Everything needed to continue a training run from a checkpoint."""
    policy: PolicyBundle
    optimizer: Adam
    rng: np.random.Generator
    curriculum: Optional[CurriculumState] = None


def _trainable(policy: PolicyBundle):
    return policy.actor.params + policy.critic.params + [policy.log_std]


def _blocks(policy: PolicyBundle, optimizer: Optional[Adam]) -> Dict[str, np.ndarray]:
    blocks = {}
    for prefix, net in (("actor", policy.actor), ("critic", policy.critic)):
        for i, p in enumerate(net.params):
            blocks[f"{prefix}.{i}"] = p
    blocks["log_std"] = policy.log_std
    for prefix, norm in (("actor_norm", policy.actor_normalizer), ("critic_norm", policy.critic_normalizer)):
        blocks[f"{prefix}.mean"] = norm.mean
        blocks[f"{prefix}.var"] = norm.var
    if optimizer is not None:
        for i, (m, v) in enumerate(zip(optimizer.m, optimizer.v)):
            blocks[f"adam.m.{i}"] = m
            blocks[f"adam.v.{i}"] = v
    return blocks


def save_checkpoint(
    policy: PolicyBundle,
    path: Path,
    optimizer: Optional[Adam] = None,
    rng: Optional[np.random.Generator] = None,
    curriculum: Optional[CurriculumState] = None,
) -> Path:
    """
    Write a policy, optionally with the training state that resumes it.

    Raises:
        CheckpointError: If the file cannot be written
    """
    path = Path(path)
    meta = {
        "actor_sizes": policy.actor.sizes,
        "critic_sizes": policy.critic.sizes,
        "iteration": policy.iteration,
        "progress": policy.progress,
        "actor_norm_count": policy.actor_normalizer.count,
        "critic_norm_count": policy.critic_normalizer.count,
    }
    if optimizer is not None:
        meta["adam_step"] = optimizer.t
        meta["adam_lr"] = optimizer.lr
    if rng is not None:
        meta["rng_state"] = rng.bit_generator.state
    if curriculum is not None:
        meta["curriculum"] = {"noise_scale": curriculum.noise_scale, "penalty_scale": curriculum.penalty_scale}

    lines = [f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}", json.dumps(meta, sort_keys=True)]
    for name, array in _blocks(policy, optimizer).items():
        matrix = np.atleast_2d(array) if array.ndim == 2 else array.reshape(1, -1)
        lines.append(f"block {name} {matrix.shape[0]} {matrix.shape[1]}")
        lines.extend(" ".join(format(float(x), ".17g") for x in row) for row in matrix)

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise CheckpointError(f"Cannot write checkpoint {path}: {e}") from e
    logger.debug(f"Saved checkpoint {path} (iteration {policy.iteration})")
    return path


def _read_blocks(lines, source: str) -> Dict[str, np.ndarray]:
    blocks = {}
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 4 or parts[0] != "block":
            raise CheckpointError(f"{source}: expected a block header at line {i + 3}, found {lines[i][:40]!r}")
        name, rows, cols = parts[1], int(parts[2]), int(parts[3])
        body = lines[i + 1:i + 1 + rows]
        if len(body) != rows:
            raise CheckpointError(f"{source}: block '{name}' is truncated")
        try:
            matrix = np.array([[float(x) for x in row.split()] for row in body], dtype=float)
        except ValueError as e:
            raise CheckpointError(f"{source}: block '{name}' has malformed numbers: {e}") from e
        if matrix.shape != (rows, cols):
            raise CheckpointError(f"{source}: block '{name}' has shape {matrix.shape}, expected {(rows, cols)}")
        blocks[name] = matrix
        i += 1 + rows
    return blocks


def _read(path: Path) -> Tuple[dict, Dict[str, np.ndarray]]:
    try:
        lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    if not lines or lines[0].split()[0] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a toimit checkpoint")
    if lines[0].split()[1:] != [f"v{CHECKPOINT_VERSION}"]:
        raise CheckpointError(f"{path}: unsupported checkpoint version {lines[0].split()[1:]}")
    try:
        meta = json.loads(lines[1])
    except (IndexError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: damaged checkpoint header: {e}") from e
    return meta, _read_blocks(lines[2:], str(path))


def _policy(meta: dict, blocks: Dict[str, np.ndarray], path: Path) -> PolicyBundle:
    def network(prefix: str, sizes) -> MLP:
        net = MLP(sizes)
        for i, p in enumerate(net.params):
            key = f"{prefix}.{i}"
            if key not in blocks:
                raise CheckpointError(f"{path}: missing block '{key}'")
            net.params[i] = blocks[key].reshape(p.shape)
        return net

    def normalizer(prefix: str, count: float) -> RunningNormalizer:
        mean = blocks[f"{prefix}.mean"].reshape(-1)
        return RunningNormalizer(mean.size, mean=mean, var=blocks[f"{prefix}.var"].reshape(-1), count=count)

    try:
        return PolicyBundle(
            actor=network("actor", meta["actor_sizes"]),
            critic=network("critic", meta["critic_sizes"]),
            log_std=blocks["log_std"].reshape(-1),
            actor_normalizer=normalizer("actor_norm", meta["actor_norm_count"]),
            critic_normalizer=normalizer("critic_norm", meta["critic_norm_count"]),
            iteration=int(meta["iteration"]),
            progress=float(meta["progress"]),
        )
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"{path}: incomplete checkpoint: {e}") from e


def load_checkpoint(path: Path) -> PolicyBundle:
    """
    Raises:
        CheckpointError: If the file is missing, has another version, or is malformed
    """
    path = Path(path)
    meta, blocks = _read(path)
    return _policy(meta, blocks, path)


def load_training_state(path: Path) -> TrainingState:
    """
    Policy, optimizer, rollout generator and curriculum of a trainer checkpoint.

    Raises:
        CheckpointError: If the checkpoint is malformed or carries no training state
    """
    path = Path(path)
    meta, blocks = _read(path)
    policy = _policy(meta, blocks, path)
    if "adam_step" not in meta or "rng_state" not in meta:
        raise CheckpointError(f"{path}: checkpoint has no training state to resume from")

    params = _trainable(policy)
    optimizer = Adam(params, float(meta["adam_lr"]))
    optimizer.t = int(meta["adam_step"])
    try:
        for i, p in enumerate(params):
            optimizer.m[i] = blocks[f"adam.m.{i}"].reshape(p.shape)
            optimizer.v[i] = blocks[f"adam.v.{i}"].reshape(p.shape)
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"{path}: incomplete optimizer state: {e}") from e

    rng = np.random.default_rng()
    try:
        rng.bit_generator.state = meta["rng_state"]
    except (TypeError, ValueError, KeyError) as e:
        raise CheckpointError(f"{path}: unusable generator state: {e}") from e

    curriculum = meta.get("curriculum")
    return TrainingState(
        policy=policy,
        optimizer=optimizer,
        rng=rng,
        curriculum=CurriculumState(**curriculum) if curriculum is not None else None,
    )
