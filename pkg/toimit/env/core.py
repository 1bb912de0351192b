# toimit/env/core.py - the imitation environment: PD substeps, observations, rewards, episodes
import csv
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from toimit.dataset import DatasetRecord, ReferenceTuple, reference_at
from toimit.dynamics import RobotModel, RobotState
from toimit.dynamics.algorithms import site_positions
from toimit.env.observations import (
    Observation,
    StridedHistory,
    actor_layout,
    add_noise,
    assert_actor_unprivileged,
    critic_layout,
    projected_gravity,
)
from toimit.env.physics import SoftContactSimulator
from toimit.env.randomization import CurriculumState, RandomizationDraw, noise_sigmas, randomize
from toimit.env.rewards import ALL_TERMS, RewardBreakdown, TrackedQuantities, compute_reward, effective_weights
from toimit.env.terrain import Terrain
from toimit.errors import ConfigError, DimensionError, ModelHashMismatchError, NumericError
from toimit.schemas import EnvConfig
from toimit.tasks import build_model


logger = logging.getLogger(__name__)

BASE_SITE = "base"


def pd_torque(
    kp: np.ndarray,
    kd: np.ndarray,
    action: np.ndarray,
    default_pos: np.ndarray,
    joint_pos: np.ndarray,
    joint_vel: np.ndarray,
    limits: np.ndarray,
) -> np.ndarray:
    """u = kp * (a + q_default - q) - kd * qdot, clamped to the torque limits."""
    u = kp * (action + default_pos - joint_pos) - kd * joint_vel
    return np.clip(u, -limits, limits)


@dataclass
class StepResult:
    observation: Observation
    reward: RewardBreakdown
    done: bool
    terminated: bool = False
    timeout: bool = False
    info: Dict[str, object] = field(default_factory=dict)


def contact_sites_of(records: Sequence[DatasetRecord]) -> List[str]:
    """Sites in contact at some knot of any record, in model site order."""
    names = records[0].site_names
    used = np.zeros(len(names), dtype=bool)
    for record in records:
        used |= record.contact_mask.any(axis=0)
    return [name for i, name in enumerate(names) if used[i]]


class ImitationEnv:
    """
    Single-robot tracking environment over a set of reference records.

    Each episode follows one record from its first knot until the reference
    ends (a timeout) or the robot falls (a termination).
    """

    def __init__(
        self,
        records: Sequence[DatasetRecord],
        config: Optional[EnvConfig] = None,
        seed: int = 0,
        model: Optional[RobotModel] = None,
    ):
        if not records:
            raise ConfigError("An imitation environment needs at least one reference record")
        self.records = list(records)
        self.config = config or EnvConfig()

        model_ids = {r.task.model_id for r in self.records}
        if len(model_ids) != 1:
            raise ConfigError(f"Reference records mix robot models: {sorted(model_ids)}")
        self.model = model or build_model(model_ids.pop())
        for record in self.records:
            if record.model_hash != self.model.hash:
                raise ModelHashMismatchError(expected=self.model.hash, found=record.model_hash)

        self.joints = list(self.model.actuated)
        self.n_joints = self.model.n_u
        self.default_pos = np.asarray(self.model.default_joint_pos, dtype=float)
        self.contact_sites = contact_sites_of(self.records)
        self.ee_sites = [name for name in self.model.site_names if name != BASE_SITE]
        site_order = list(self.records[0].site_names)
        self._contact_columns = [site_order.index(n) for n in self.contact_sites]
        self._ee_columns = [site_order.index(n) for n in self.ee_sites]

        c = self.config
        self.actor_layout = actor_layout(self.n_joints, len(self.contact_sites), c.history_len, c.reference_channels)
        self.critic_layout = critic_layout(
            self.n_joints, len(self.ee_sites), len(self.contact_sites), c.history_len
        )
        assert_actor_unprivileged(self.actor_layout)

        self.rng = np.random.default_rng(seed)
        self.curriculum = CurriculumState(noise_scale=1.0, penalty_scale=1.0)
        self.record_log = False
        self.log: List[Dict[str, float]] = []
        self.record: Optional[DatasetRecord] = None
        self.state: Optional[RobotState] = None

    @property
    def action_dim(self) -> int:
        return self.n_joints

    @property
    def policy_dt(self) -> float:
        return 1.0 / self.config.policy_rate

    def set_curriculum(self, state: CurriculumState) -> None:
        self.curriculum = state

    # ============================================
    # EPISODE SETUP
    # ============================================

    def _terrain(self, record: DatasetRecord, draw: RandomizationDraw) -> Terrain:
        if record.task.name == "press":
            return Terrain.desk(record.task.parameters.desk_height)
        if draw.terrain == "rough":
            return Terrain.rough(self.config.rough_amplitude, self.config.rough_spacing, self.rng)
        return Terrain.flat()

    def reset(
        self,
        seed: Optional[int] = None,
        record_index: Optional[int] = None,
        terrain: Optional[Terrain] = None,
        pitch_offset: float = 0.0,
        draw: Optional[RandomizationDraw] = None,
    ) -> Observation:
        """Start an episode; every random choice comes from the env's generator."""
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        if record_index is None:
            record_index = int(self.rng.integers(len(self.records)))
        self.record_index = record_index
        self.record = self.records[record_index]
        self.draw = draw or randomize(self.config.dr_ranges, self.rng)
        self.terrain = terrain or self._terrain(self.record, self.draw)

        c = self.config
        self.sim_model = self.model.scaled(self.draw.mass_scale, self.draw.gravity_scale)
        self.kp = np.full(self.n_joints, c.kp * self.draw.gain_scale)
        self.kd = np.full(self.n_joints, c.kd * self.draw.gain_scale)
        self.torque_limits = np.asarray(self.model.torque_limits) * self.draw.motor_strength
        self.sim = SoftContactSimulator(
            self.sim_model, self.terrain, self.contact_sites, c.contact, self.draw.friction, 1.0 / c.inner_pd_rate
        )
        self.weights = effective_weights(
            c.reward_weights,
            c.reference_channels,
            self.record.task.name,
            self.curriculum.penalty_scale,
            c.base_position_reward,
        )

        q0 = self.record.q[0].copy()
        if self.model.floating:
            q0[2] += pitch_offset
        self.state = RobotState(q=q0, v=self.record.v[0].copy())
        self.step_count = 0
        self.max_steps = int(np.floor(self.record.duration * c.policy_rate + 1e-9))
        self.nominal_height = float(self.record.q[0, 1]) if self.model.floating else 0.0

        self.delay_substeps = int(round(self.draw.action_delay * c.inner_pd_rate))
        self._targets = deque([self.default_pos.copy()] * (self.delay_substeps + 1), maxlen=self.delay_substeps + 1)
        self.actions = deque([np.zeros(self.n_joints)] * 3, maxlen=3)
        self.applied_torque = np.zeros(self.n_joints)
        self.contact_forces = np.zeros(2 * len(self.contact_sites))

        self.sigmas = noise_sigmas(c.dr_ranges.noise, self.curriculum.noise_scale)
        q_j = self.state.q[self.joints]
        self.true_history = StridedHistory(c.history_len, c.history_stride, q_j)
        self.noisy_history = StridedHistory(
            c.history_len, c.history_stride, add_noise(q_j, self.sigmas["joint_pos"], self.rng)
        )
        self.action_history = StridedHistory(c.history_len, c.history_stride, np.zeros(self.n_joints))
        self.log = []
        return self._observe(reference_at(self.record, 0.0))

    # ============================================
    # STEP
    # ============================================

    def step(self, action: Sequence[float]) -> StepResult:
        """
        Apply joint-position offsets for one policy step.

        Runs inner_pd_rate / policy_rate PD substeps. A non-finite simulation
        state ends the episode as terminated with the error in info["failure"].
        """
        if self.state is None:
            raise RuntimeError("reset() must be called before step()")
        action = np.asarray(action, dtype=float).reshape(-1)
        if action.shape[0] != self.n_joints:
            raise DimensionError(f"Action has {action.shape[0]} entries, expected {self.n_joints}")
        bound = self.config.action_bound
        action = np.clip(action, -bound, bound)

        v_before = self.state.v[self.joints].copy()
        try:
            for _ in range(self.config.substeps):
                self._targets.append(action)
                delayed = self._targets[0]
                u = pd_torque(
                    self.kp, self.kd, delayed, self.default_pos,
                    self.state.q[self.joints], self.state.v[self.joints], self.torque_limits,
                )
                result = self.sim.step(self.state, u)
                self.state = result.state
                self.applied_torque = u
                self.contact_forces = result.contact_forces
        except NumericError as e:
            logger.debug(f"Episode on record {self.record_index} failed at step {self.step_count}: {e}")
            zero = RewardBreakdown(terms={n: 0.0 for n in ALL_TERMS}, weights=dict(self.weights), total=0.0)
            obs = Observation(np.zeros(self.actor_layout.size), np.zeros(self.critic_layout.size))
            return StepResult(obs, zero, done=True, terminated=True, info={"failure": str(e)})

        joint_accel = (self.state.v[self.joints] - v_before) / self.policy_dt
        self.step_count += 1
        t = min(self.step_count * self.policy_dt, self.record.duration)
        reference = reference_at(self.record, t)

        self.actions.appendleft(action.copy())
        q_j = self.state.q[self.joints]
        self.true_history.push(q_j)
        self.noisy_history.push(add_noise(q_j, self.sigmas["joint_pos"], self.rng))
        self.action_history.push(action)

        reward = compute_reward(
            self.measured(),
            self.reference_quantities(reference),
            (self.actions[0], self.actions[1], self.actions[2]),
            self.weights,
            self.torque_limits,
            joint_accel,
        )
        terminated = self._fallen()
        timeout = not terminated and self.step_count >= self.max_steps
        observation = self._observe(reference)

        if self.record_log:
            self.log.append(self._log_row(t, reward, reference))
        return StepResult(observation, reward, terminated or timeout, terminated, timeout)

    def _fallen(self) -> bool:
        if not self.model.floating:
            return False
        q = self.state.q
        height = q[1] - self.terrain.height(q[0])
        return bool(height < self.config.min_height_fraction * self.nominal_height or abs(q[2]) > self.config.max_pitch)

    # ============================================
    # MEASUREMENTS AND OBSERVATIONS
    # ============================================

    def _base(self, q: np.ndarray, v: np.ndarray):
        if self.model.floating:
            return q[:2].copy(), float(q[2]), v[:2].copy(), float(v[2])
        return np.zeros(2), 0.0, np.zeros(2), 0.0

    def measured(self) -> TrackedQuantities:
        q, v = self.state.q, self.state.v
        base_pos, pitch, base_vel, pitch_rate = self._base(q, v)
        return TrackedQuantities(
            joint_pos=q[self.joints].copy(),
            base_pos=base_pos,
            base_pitch=pitch,
            base_lin_vel=base_vel,
            base_ang_vel=pitch_rate,
            ee_pos=site_positions(self.model, q, self.ee_sites),
            torque=self.applied_torque.copy(),
            contact_force=self.contact_forces.copy(),
        )

    def reference_quantities(self, ref: ReferenceTuple) -> TrackedQuantities:
        return TrackedQuantities(
            joint_pos=ref.q[self.joints],
            base_pos=ref.base_position,
            base_pitch=ref.base_pitch,
            base_lin_vel=ref.base_velocity,
            base_ang_vel=ref.base_pitch_rate,
            ee_pos=ref.sites[self._ee_columns],
            torque=ref.u,
            contact_force=self._reference_forces(ref),
        )

    def reference_contact_active(self, ref: ReferenceTuple) -> np.ndarray:
        """Reference contact flags of the simulated contact sites."""
        return np.asarray(ref.contact_mask, dtype=bool)[self._contact_columns]

    def _reference_forces(self, ref: ReferenceTuple) -> np.ndarray:
        return np.concatenate([ref.forces[2 * i:2 * i + 2] for i in self._contact_columns]) if self._contact_columns else np.zeros(0)

    def _observe(self, ref: ReferenceTuple) -> Observation:
        q, v = self.state.q, self.state.v
        base_pos, pitch, base_vel, pitch_rate = self._base(q, v)
        s = self.sigmas
        rng = self.rng
        history = self.config.history_len
        ref_joints = ref.q[self.joints]
        ref_forces = self._reference_forces(ref)

        actor_values = {
            "noisy_base_lin_vel": add_noise(base_vel, s["base_lin_vel"], rng),
            "noisy_base_ang_vel": add_noise([pitch_rate], s["base_ang_vel"], rng),
            "noisy_gravity": add_noise(projected_gravity(pitch), s["gravity"], rng),
            "noisy_joint_pos_hist": self.noisy_history.sample() if history else self.noisy_history.latest(),
            "noisy_joint_vel": add_noise(v[self.joints], s["joint_vel"], rng),
            "action_hist": self.action_history.sample(),
            "ref_base_lin_vel": ref.base_velocity,
            "ref_base_ang_vel": [ref.base_pitch_rate],
            "ref_joint_pos": ref_joints,
            "ref_contact_force": ref_forces,
            "ref_torque": ref.u,
        }

        ee = site_positions(self.model, q, self.ee_sites)
        critic_values = {
            "base_pos": base_pos,
            "base_pitch": [pitch],
            "base_lin_vel": base_vel,
            "base_ang_vel": [pitch_rate],
            "gravity": projected_gravity(pitch),
            "joint_pos_hist": self.true_history.sample() if history else self.true_history.latest(),
            "joint_vel": v[self.joints],
            "ee_pos": ee - base_pos,
            "action_hist": self.action_history.sample(),
            "contact_force": self.contact_forces,
            "torque": self.applied_torque,
            "kp": self.kp,
            "kd": self.kd,
            "ref_base_pos": ref.base_position,
            "ref_base_pitch": [ref.base_pitch],
            "ref_base_lin_vel": ref.base_velocity,
            "ref_base_ang_vel": [ref.base_pitch_rate],
            "ref_joint_pos": ref_joints,
            "ref_joint_vel": ref.v[self.joints],
            "ref_ee_pos": ref.sites[self._ee_columns] - ref.base_position,
            "ref_contact_force": ref_forces,
            "ref_torque": ref.u,
        }
        return Observation(self.actor_layout.assemble(actor_values), self.critic_layout.assemble(critic_values))

    # ============================================
    # EPISODE LOG
    # ============================================

    def _log_row(self, t: float, reward: RewardBreakdown, ref: ReferenceTuple) -> Dict[str, float]:
        measured = self.measured()
        target = self.reference_quantities(ref)
        row = {"step": self.step_count, "t": t, "reward_total": reward.total}
        row.update({f"reward_{name}": reward.terms[name] for name in ALL_TERMS})
        row["joint_error"] = float(np.mean(np.abs(measured.joint_pos - target.joint_pos)))
        row["ee_error"] = float(np.mean(np.linalg.norm(measured.ee_pos - target.ee_pos, axis=1))) if self.ee_sites else 0.0
        row["force_error"] = float(np.sum(np.abs(measured.contact_force - target.contact_force)))
        return row


def write_episode_log(rows: Sequence[Dict[str, float]], path: Path) -> Path:
    """Per-step reward breakdown and tracking errors as CSV."""
    if not rows:
        raise ValueError("Episode log is empty")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return path


def replay_open_loop(
    record: DatasetRecord, config: Optional[EnvConfig] = None, duration: float = 0.5
) -> np.ndarray:
    """
    Replay the reference torques through the soft-contact simulator, no noise or delay.

    Returns:
        Max-abs joint tracking error after each policy step
    """
    config = config or EnvConfig()
    env = ImitationEnv([record], config)
    env.reset(seed=0, record_index=0, terrain=env._terrain(record, RandomizationDraw.nominal()),
              draw=RandomizationDraw.nominal())
    steps = min(int(round(duration * config.policy_rate)), env.max_steps)
    state = env.state
    errors = []
    for k in range(steps):
        for j in range(config.substeps):
            t = (k * config.substeps + j) / config.inner_pd_rate
            u = reference_at(record, min(t, record.duration)).u
            state = env.sim.step(state, u).state
        t = min((k + 1) * env.policy_dt, record.duration)
        ref = reference_at(record, t)
        errors.append(float(np.max(np.abs(state.q[env.joints] - ref.q[env.joints]))))
    return np.array(errors)
