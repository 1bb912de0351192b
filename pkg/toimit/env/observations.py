# toimit/env/observations.py - actor/critic observation layouts, history buffers and assembly
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from toimit.errors import DimensionError
from toimit.schemas import ReferenceChannels


# Quantities only the simulator knows; the actor must never see them
PRIVILEGED_BLOCKS = frozenset({
    "base_pos",
    "base_pitch",
    "base_lin_vel",
    "base_ang_vel",
    "gravity",
    "joint_pos_hist",
    "joint_vel",
    "ee_pos",
    "contact_force",
    "torque",
    "kp",
    "kd",
})


@dataclass(frozen=True)
class ObservationLayout:
    blocks: Tuple[Tuple[str, int], ...]

    @property
    def size(self) -> int:
        return sum(width for _, width in self.blocks)

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.blocks]

    def slices(self) -> Dict[str, slice]:
        out, cursor = {}, 0
        for name, width in self.blocks:
            out[name] = slice(cursor, cursor + width)
            cursor += width
        return out

    def assemble(self, values: Dict[str, np.ndarray]) -> np.ndarray:
        parts = []
        for name, width in self.blocks:
            block = np.atleast_1d(np.asarray(values[name], dtype=float)).reshape(-1)
            if block.shape[0] != width:
                raise DimensionError(f"Observation block '{name}' has {block.shape[0]} entries, expected {width}")
            parts.append(block)
        return np.concatenate(parts) if parts else np.zeros(0)


def history_width(history_len: int) -> int:
    """Joint-position history entries per joint (the current reading when history is off)."""
    return max(history_len, 1)


def actor_layout(
    n_joints: int, n_contact: int, history_len: int, channels: ReferenceChannels
) -> ObservationLayout:
    blocks = [
        ("noisy_base_lin_vel", 2),
        ("noisy_base_ang_vel", 1),
        ("noisy_gravity", 2),
        ("noisy_joint_pos_hist", history_width(history_len) * n_joints),
        ("noisy_joint_vel", n_joints),
    ]
    if history_len > 0:
        blocks.append(("action_hist", history_len * n_joints))
    blocks += [
        ("ref_base_lin_vel", 2),
        ("ref_base_ang_vel", 1),
        ("ref_joint_pos", n_joints),
    ]
    if channels.force:
        blocks.append(("ref_contact_force", 2 * n_contact))
    if channels.torque:
        blocks.append(("ref_torque", n_joints))
    return ObservationLayout(tuple(blocks))


def critic_layout(n_joints: int, n_ee: int, n_contact: int, history_len: int) -> ObservationLayout:
    blocks = [
        ("base_pos", 2),
        ("base_pitch", 1),
        ("base_lin_vel", 2),
        ("base_ang_vel", 1),
        ("gravity", 2),
        ("joint_pos_hist", history_width(history_len) * n_joints),
        ("joint_vel", n_joints),
        ("ee_pos", 2 * n_ee),
    ]
    if history_len > 0:
        blocks.append(("action_hist", history_len * n_joints))
    blocks += [
        ("contact_force", 2 * n_contact),
        ("torque", n_joints),
        ("kp", n_joints),
        ("kd", n_joints),
        ("ref_base_pos", 2),
        ("ref_base_pitch", 1),
        ("ref_base_lin_vel", 2),
        ("ref_base_ang_vel", 1),
        ("ref_joint_pos", n_joints),
        ("ref_joint_vel", n_joints),
        ("ref_ee_pos", 2 * n_ee),
        ("ref_contact_force", 2 * n_contact),
        ("ref_torque", n_joints),
    ]
    return ObservationLayout(tuple(blocks))


def assert_actor_unprivileged(layout: ObservationLayout) -> None:
    """
    Raises:
        ValueError: If the actor layout contains a privileged block
    """
    leaked = sorted(set(layout.names) & PRIVILEGED_BLOCKS)
    if leaked:
        raise ValueError(f"Actor observation contains privileged blocks: {leaked}")


def projected_gravity(pitch: float) -> np.ndarray:
    return np.array([np.sin(pitch), np.cos(pitch)])


# ============================================
# HISTORY
# ============================================


class StridedHistory:
    """
    Policy-rate ring buffer sampled at a stride.

    `sample()` returns [x_t, x_{t-stride}, ..., x_{t-(N-1)stride}] where x_t is
    the most recent push, padded with the initial value until enough steps
    have been pushed.
    """

    def __init__(self, length: int, stride: int, initial: np.ndarray):
        self.length = length
        self.stride = stride
        capacity = max(1, 1 + (length - 1) * stride)
        self._buffer = deque([np.array(initial, dtype=float)] * capacity, maxlen=capacity)

    def push(self, value: np.ndarray) -> None:
        self._buffer.append(np.array(value, dtype=float))

    def latest(self) -> np.ndarray:
        return self._buffer[-1]

    def sample(self) -> np.ndarray:
        if self.length == 0:
            return np.zeros(0)
        items = [self._buffer[-1 - i * self.stride] for i in range(self.length)]
        return np.concatenate(items)


@dataclass(frozen=True, eq=False)
class Observation:
    actor: np.ndarray
    critic: np.ndarray


def add_noise(values: Sequence[float], sigma: float, rng: np.random.Generator) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if sigma <= 0.0:
        return values.copy()
    return values + rng.normal(0.0, sigma, size=values.shape)
