# toimit/env/rewards.py - imitation reward terms and their weighting
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from toimit.schemas import ReferenceChannels, RewardWeights


TASK_TERMS = (
    "joint_pos",
    "base_pos",
    "base_ori",
    "base_lin_vel",
    "base_ang_vel",
    "ee_pos",
    "torque",
    "contact_force",
)
PENALTY_TERMS = ("action_rate", "torque_magnitude", "joint_accel")
ALL_TERMS = TASK_TERMS + PENALTY_TERMS

# exp(-scale * error) sharpness per task term
SHARPNESS = {
    "joint_pos": 5.0,
    "base_pos": 20.0,
    "base_ori": 50.0,
    "base_lin_vel": 2.0,
    "base_ang_vel": 0.5,
    "ee_pos": 20.0,
    "torque": 0.01,
    "contact_force": 0.05,
}

WALKING_TASKS = ("walk", "stair")


@dataclass(frozen=True, eq=False)
class TrackedQuantities:
    """Quantities compared against the reference, measured or from the reference itself."""
    joint_pos: np.ndarray
    base_pos: np.ndarray  # (x, z)
    base_pitch: float
    base_lin_vel: np.ndarray
    base_ang_vel: float
    ee_pos: np.ndarray  # (n_ee, 2)
    torque: np.ndarray
    contact_force: np.ndarray  # stacked (x, z) per contact site


@dataclass
class RewardBreakdown:
    terms: Dict[str, float]
    weights: Dict[str, float]
    total: float = 0.0
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def task_reward(self) -> float:
        return sum(self.weights[name] * self.terms[name] for name in TASK_TERMS)

    @property
    def penalty(self) -> float:
        return sum(self.weights[name] * self.terms[name] for name in PENALTY_TERMS)


def effective_weights(
    weights: RewardWeights,
    channels: ReferenceChannels = ReferenceChannels(),
    task_name: Optional[str] = None,
    penalty_scale: float = 1.0,
    base_position_reward: Optional[bool] = None,
) -> Dict[str, float]:
    """
    Weights after task flags, reference-channel masks and the penalty curriculum.

    The base-position term is off for walking tasks unless base_position_reward
    says otherwise; force and torque terms are off when their channel is masked.
    """
    w = weights.model_dump()
    if base_position_reward is None:
        base_position_reward = task_name not in WALKING_TASKS
    if not base_position_reward:
        w["base_pos"] = 0.0
    if not channels.force:
        w["contact_force"] = 0.0
    if not channels.torque:
        w["torque"] = 0.0
    for name in PENALTY_TERMS:
        w[name] *= penalty_scale
    return w


def compute_reward(
    measured: TrackedQuantities,
    reference: TrackedQuantities,
    actions: Sequence[np.ndarray],
    weights: Dict[str, float],
    torque_limits: np.ndarray,
    joint_accel: np.ndarray,
) -> RewardBreakdown:
    """
    Evaluate every reward term and the weighted total.

    Args:
        measured: Current measured quantities
        reference: Reference quantities at the same time
        actions: Action window (a_t, a_{t-1}, a_{t-2})
        weights: Effective weights (see effective_weights)
        torque_limits: Per-joint limits used to normalize the torque penalty
        joint_accel: Joint accelerations over the last policy step
    """
    a_t, a_1, a_2 = (np.asarray(a, dtype=float) for a in actions)

    errors = {
        "joint_pos": float(np.sum((reference.joint_pos - measured.joint_pos) ** 2)),
        "base_pos": float(np.sum((reference.base_pos - measured.base_pos) ** 2)),
        "base_ori": float((reference.base_pitch - measured.base_pitch) ** 2),
        "base_lin_vel": float(np.sum((reference.base_lin_vel - measured.base_lin_vel) ** 2)),
        "base_ang_vel": float((reference.base_ang_vel - measured.base_ang_vel) ** 2),
        "ee_pos": float(np.sum((reference.ee_pos - measured.ee_pos) ** 2)),
        "torque": float(np.sum((reference.torque - measured.torque) ** 2)),
        "contact_force": float(np.sum(np.abs(reference.contact_force - measured.contact_force))),
    }
    terms = {name: float(np.exp(-SHARPNESS[name] * errors[name])) for name in TASK_TERMS}
    terms["action_rate"] = float(np.sum((a_t - 2.0 * a_1 + a_2) ** 2))
    terms["torque_magnitude"] = float(np.sum((measured.torque / torque_limits) ** 2))
    terms["joint_accel"] = float(np.sum(np.asarray(joint_accel) ** 2))

    total = 0.0
    for name in ALL_TERMS:
        total += weights[name] * terms[name]
    return RewardBreakdown(terms=terms, weights=dict(weights), total=total)
