# toimit/rl/policy.py - asymmetric actor-critic policy bundle
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from toimit.rl.network import MLP, RunningNormalizer
from toimit.schemas import PPOHyper


logger = logging.getLogger(__name__)

LOG_STD_MIN, LOG_STD_MAX = -4.0, 1.0
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class PolicyBundle:
    """
    Gaussian actor over the actor view, value critic over the privileged critic view.

    The actor normalizer is only ever updated from actor observations; the
    critic keeps its own normalizer.
    """
    actor: MLP
    critic: MLP
    log_std: np.ndarray
    actor_normalizer: RunningNormalizer
    critic_normalizer: RunningNormalizer
    iteration: int = 0
    progress: float = 0.0

    @classmethod
    def create(cls, actor_dim: int, critic_dim: int, action_dim: int, hyper: PPOHyper, seed: int) -> "PolicyBundle":
        rng = np.random.default_rng(seed)
        return cls(
            actor=MLP([actor_dim, *hyper.actor_hidden, action_dim], rng, output_gain=0.01),
            critic=MLP([critic_dim, *hyper.critic_hidden, 1], rng, output_gain=1.0),
            log_std=np.full(action_dim, float(np.clip(hyper.init_log_std, LOG_STD_MIN, LOG_STD_MAX))),
            actor_normalizer=RunningNormalizer(actor_dim),
            critic_normalizer=RunningNormalizer(critic_dim),
        )

    @property
    def actor_dim(self) -> int:
        return self.actor.sizes[0]

    @property
    def critic_dim(self) -> int:
        return self.critic.sizes[0]

    @property
    def action_dim(self) -> int:
        return self.actor.sizes[-1]

    def clamp_log_std(self) -> None:
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def mean_action(self, actor_obs: np.ndarray) -> np.ndarray:
        return self.actor.forward(self.actor_normalizer.normalize(actor_obs))

    def value(self, critic_obs: np.ndarray) -> np.ndarray:
        return self.critic.forward(self.critic_normalizer.normalize(critic_obs))[:, 0]

    def act(
        self, actor_obs: np.ndarray, rng: Optional[np.random.Generator] = None, deterministic: bool = False
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Actions and their log-probabilities for a batch of actor observations."""
        mean = self.mean_action(actor_obs)
        if deterministic:
            return mean, log_prob(mean, mean, self.log_std)
        noise = rng.standard_normal(mean.shape)
        actions = mean + np.exp(self.log_std) * noise
        return actions, log_prob(actions, mean, self.log_std)


def log_prob(actions: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    z = (actions - mean) / np.exp(log_std)
    return -0.5 * np.sum(z ** 2, axis=-1) - np.sum(log_std) - 0.5 * actions.shape[-1] * LOG_2PI


def entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))
