# toimit/rl - asymmetric actor-critic PPO
from toimit.rl.checkpoint import TrainingState, load_checkpoint, load_training_state, save_checkpoint
from toimit.rl.network import MLP, Adam, RunningNormalizer
from toimit.rl.policy import PolicyBundle
from toimit.rl.ppo import RolloutBatch, UpdateStats, VectorEnv, collect, compute_gae, ppo_update
from toimit.rl.trainer import TrainResult, train

__all__ = [
    "MLP",
    "Adam",
    "PolicyBundle",
    "RolloutBatch",
    "RunningNormalizer",
    "TrainResult",
    "TrainingState",
    "UpdateStats",
    "VectorEnv",
    "collect",
    "compute_gae",
    "load_checkpoint",
    "load_training_state",
    "ppo_update",
    "save_checkpoint",
    "train",
]
