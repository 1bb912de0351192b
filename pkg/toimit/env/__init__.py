# toimit/env - imitation environment
from toimit.env.core import ImitationEnv, StepResult, pd_torque, replay_open_loop, write_episode_log
from toimit.env.observations import Observation, ObservationLayout, assert_actor_unprivileged
from toimit.env.randomization import (
    EVAL_CURRICULUM,
    CurriculumState,
    RandomizationDraw,
    curriculum_update,
    randomize,
)
from toimit.env.rewards import RewardBreakdown, TrackedQuantities, compute_reward, effective_weights
from toimit.env.terrain import Terrain

__all__ = [
    "EVAL_CURRICULUM",
    "CurriculumState",
    "ImitationEnv",
    "Observation",
    "ObservationLayout",
    "RandomizationDraw",
    "RewardBreakdown",
    "StepResult",
    "Terrain",
    "TrackedQuantities",
    "assert_actor_unprivileged",
    "compute_reward",
    "curriculum_update",
    "effective_weights",
    "pd_torque",
    "randomize",
    "replay_open_loop",
    "write_episode_log",
]
