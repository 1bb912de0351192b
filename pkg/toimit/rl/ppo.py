# toimit/rl/ppo.py - rollout collection, GAE and the clipped PPO update
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from toimit.env import ImitationEnv, Observation
from toimit.env.rewards import ALL_TERMS
from toimit.errors import EnvFailure, NumericError
from toimit.rl.network import Adam
from toimit.rl.policy import PolicyBundle, entropy, log_prob
from toimit.schemas import PPOHyper


logger = logging.getLogger(__name__)


# ============================================
# VECTORIZED ENVIRONMENTS
# ============================================


class VectorEnv:
    """E independent environments stepped in a fixed order, auto-reset on episode end."""

    def __init__(self, envs: Sequence[ImitationEnv]):
        if not envs:
            raise ValueError("VectorEnv needs at least one environment")
        self.envs = list(envs)
        self.observations: List[Observation] = [env.reset() for env in self.envs]
        self.episode_task_reward = np.zeros(len(self.envs))
        self.episode_length = np.zeros(len(self.envs), dtype=int)

    def __len__(self) -> int:
        return len(self.envs)

    def actor_batch(self) -> np.ndarray:
        return np.stack([o.actor for o in self.observations])

    def critic_batch(self) -> np.ndarray:
        return np.stack([o.critic for o in self.observations])


@dataclass
class RolloutBatch:
    actor_obs: np.ndarray  # (T, E, actor_dim), normalized when collected
    critic_obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray  # (T, E)
    rewards: np.ndarray
    values: np.ndarray
    next_values: np.ndarray  # value of the successor state; zero after a termination
    dones: np.ndarray
    terminals: np.ndarray
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None
    reward_terms: Dict[str, float] = field(default_factory=dict)
    task_reward: float = 0.0
    episode_task_rewards: List[float] = field(default_factory=list)

    @property
    def size(self) -> int:
        return int(self.rewards.size)

    def flat(self, name: str) -> np.ndarray:
        array = getattr(self, name)
        return array.reshape(self.size, *array.shape[2:])


def compute_gae(
    rewards: np.ndarray, values: np.ndarray, next_values: np.ndarray, dones: np.ndarray, gamma: float, lam: float
):
    """
    Generalized advantage estimates over (T, E) arrays.

    `next_values` already carries the bootstrap: zero after a termination, the
    critic's value of the final state after a timeout. The advantage recursion
    is cut at every episode end.

    Returns:
        (advantages, returns) before normalization
    """
    T = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[1:])
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * next_values[t] - values[t]
        running = delta + gamma * lam * (1.0 - dones[t]) * running
        advantages[t] = running
    return advantages, advantages + values


def collect(
    vec: VectorEnv,
    policy: PolicyBundle,
    steps: int,
    rng: np.random.Generator,
    deterministic: bool = False,
    update_normalizer: bool = True,
) -> RolloutBatch:
    """
    Step every environment `steps` times with actions from the actor.

    Raises:
        EnvFailure: If an environment raises while stepping, with its index
    """
    E = len(vec)
    actor_obs = np.zeros((steps, E, policy.actor_dim))
    critic_obs = np.zeros((steps, E, policy.critic_dim))
    actions = np.zeros((steps, E, policy.action_dim))
    log_probs = np.zeros((steps, E))
    rewards = np.zeros((steps, E))
    values = np.zeros((steps, E))
    next_values = np.zeros((steps, E))
    dones = np.zeros((steps, E))
    terminals = np.zeros((steps, E))
    term_sums = {name: 0.0 for name in ALL_TERMS}
    task_sum = 0.0
    finished = []

    for t in range(steps):
        a_obs, c_obs = vec.actor_batch(), vec.critic_batch()
        if update_normalizer:
            policy.actor_normalizer.update(a_obs)
            policy.critic_normalizer.update(c_obs)
        act, logp = policy.act(a_obs, rng, deterministic)
        actor_obs[t] = policy.actor_normalizer.normalize(a_obs)
        critic_obs[t] = policy.critic_normalizer.normalize(c_obs)
        actions[t], log_probs[t] = act, logp
        values[t] = policy.value(c_obs)

        for i, env in enumerate(vec.envs):
            try:
                result = env.step(act[i])
            except Exception as e:
                raise EnvFailure(i, f"{type(e).__name__}: {e}", e) from e

            rewards[t, i] = result.reward.total
            dones[t, i] = float(result.done)
            terminals[t, i] = float(result.terminated)
            task = result.reward.task_reward
            task_sum += task
            for name in ALL_TERMS:
                term_sums[name] += result.reward.terms[name]
            vec.episode_task_reward[i] += task
            vec.episode_length[i] += 1

            if result.terminated:
                next_values[t, i] = 0.0
            elif result.timeout:
                next_values[t, i] = float(policy.value(result.observation.critic[None, :])[0])
            if result.done:
                finished.append(float(vec.episode_task_reward[i]))
                vec.episode_task_reward[i] = 0.0
                vec.episode_length[i] = 0
                vec.observations[i] = env.reset()
            else:
                vec.observations[i] = result.observation

        # successor values of continuing steps
        live = dones[t] == 0.0
        if np.any(live):
            next_values[t, live] = policy.value(vec.critic_batch()[live])

    n = steps * E
    return RolloutBatch(
        actor_obs=actor_obs,
        critic_obs=critic_obs,
        actions=actions,
        log_probs=log_probs,
        rewards=rewards,
        values=values,
        next_values=next_values,
        dones=dones,
        terminals=terminals,
        reward_terms={name: total / n for name, total in term_sums.items()},
        task_reward=task_sum / n,
        episode_task_rewards=finished,
    )


# ============================================
# UPDATE
# ============================================


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_fraction: float
    grad_norm: float


def _clip_grads(grads: List[np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if norm > max_norm:
        for g in grads:
            g *= max_norm / (norm + 1e-12)
    return norm


def ppo_losses(policy: PolicyBundle, batch: Dict[str, np.ndarray], hyper: PPOHyper):
    """
    Clipped surrogate, clipped value loss and entropy with their gradients.

    Returns:
        (loss, parameter gradients [actor..., critic..., log_std], stats dict)
    """
    x = batch["actor_obs"]
    c = batch["critic_obs"]
    B = x.shape[0]
    std = np.exp(policy.log_std)

    mean, actor_acts = policy.actor.forward(x, keep=True)
    logp = log_prob(batch["actions"], mean, policy.log_std)
    ratio = np.exp(logp - batch["log_probs"])
    adv = batch["advantages"]
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - hyper.clip, 1.0 + hyper.clip) * adv
    policy_loss = -float(np.mean(np.minimum(surr1, surr2)))
    ent = entropy(policy.log_std)

    value, critic_acts = policy.critic.forward(c, keep=True)
    value = value[:, 0]
    old = batch["values"]
    ret = batch["returns"]
    clipped = old + np.clip(value - old, -hyper.value_clip, hyper.value_clip)
    unclipped_err = (value - ret) ** 2
    clipped_err = (clipped - ret) ** 2
    value_loss = 0.5 * float(np.mean(np.maximum(unclipped_err, clipped_err)))

    loss = policy_loss + hyper.value_coef * value_loss - hyper.entropy_coef * ent
    if not np.isfinite(loss):
        raise NumericError(
            f"Non-finite PPO loss (policy {policy_loss}, value {value_loss}, entropy {ent}, "
            f"max |ratio| {float(np.max(np.abs(ratio)))})"
        )

    # d loss / d logp, through the unclipped branch only
    g_logp = -(adv * ratio) * (surr1 <= surr2) / B
    z = (batch["actions"] - mean) / std
    g_mean = g_logp[:, None] * z / std
    g_log_std = np.sum(g_logp[:, None] * (z ** 2 - 1.0), axis=0) - hyper.entropy_coef

    use_unclipped = unclipped_err >= clipped_err
    inside = np.abs(value - old) < hyper.value_clip
    g_value = np.where(use_unclipped, value - ret, (clipped - ret) * inside) / B
    g_value *= hyper.value_coef

    actor_grads, _ = policy.actor.backward(actor_acts, g_mean)
    critic_grads, _ = policy.critic.backward(critic_acts, g_value[:, None])

    stats = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": ent,
        "approx_kl": float(np.mean((ratio - 1.0) - np.log(ratio))),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > hyper.clip)),
    }
    return loss, actor_grads + critic_grads + [g_log_std], stats


def prepare_batch(batch: RolloutBatch, hyper: PPOHyper) -> Dict[str, np.ndarray]:
    """Flatten a rollout and attach normalized advantages and returns."""
    advantages, returns = compute_gae(
        batch.rewards, batch.values, batch.next_values, batch.dones, hyper.gamma, hyper.gae_lambda
    )
    batch.advantages, batch.returns = advantages, returns
    flat_adv = advantages.reshape(-1)
    flat_adv = (flat_adv - flat_adv.mean()) / (flat_adv.std() + 1e-8)
    return {
        "actor_obs": batch.flat("actor_obs"),
        "critic_obs": batch.flat("critic_obs"),
        "actions": batch.flat("actions"),
        "log_probs": batch.log_probs.reshape(-1),
        "values": batch.values.reshape(-1),
        "returns": returns.reshape(-1),
        "advantages": flat_adv,
    }


def ppo_update(
    policy: PolicyBundle, batch: RolloutBatch, hyper: PPOHyper, optimizer: Adam, rng: np.random.Generator
) -> UpdateStats:
    """
    Run `epochs` passes of minibatch PPO over one rollout.

    Raises:
        ValueError: If the batch is empty
        NumericError: If a loss becomes non-finite
    """
    if batch.size == 0:
        raise ValueError("PPO update needs a nonempty batch")
    data = prepare_batch(batch, hyper)
    n = batch.size
    params = policy.actor.params + policy.critic.params + [policy.log_std]

    totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "approx_kl": 0.0, "clip_fraction": 0.0}
    grad_norm = 0.0
    count = 0
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.minibatch_size):
            index = order[start:start + hyper.minibatch_size]
            mini = {key: value[index] for key, value in data.items()}
            _, grads, stats = ppo_losses(policy, mini, hyper)
            grad_norm = _clip_grads(grads, hyper.max_grad_norm)
            optimizer.step(params, grads)
            policy.clamp_log_std()
            for key in totals:
                totals[key] += stats[key]
            count += 1

    return UpdateStats(grad_norm=grad_norm, **{key: value / count for key, value in totals.items()})
