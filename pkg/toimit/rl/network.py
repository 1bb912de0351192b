# toimit/rl/network.py - small tanh MLPs with manual backprop, Adam, running normalizer
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np


class MLP:
    """
    Fully connected network with tanh hidden layers and a linear output.

    Parameters are stored as [W0, b0, W1, b1, ...] with W of shape (in, out).
    """

    def __init__(self, sizes: Sequence[int], rng: Optional[np.random.Generator] = None, output_gain: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("An MLP needs at least input and output sizes")
        self.sizes = [int(s) for s in sizes]
        rng = rng or np.random.default_rng(0)
        self.params: List[np.ndarray] = []
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            gain = output_gain if i == len(self.sizes) - 2 else 1.0
            scale = gain * np.sqrt(1.0 / max(n_in, 1))
            self.params.append(rng.normal(0.0, scale, size=(n_in, n_out)))
            self.params.append(np.zeros(n_out))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    def forward(self, x: np.ndarray, keep: bool = False):
        """Outputs for a batch (B, in); with keep=True also the layer activations for backward()."""
        h = np.atleast_2d(np.asarray(x, dtype=float))
        activations = [h]
        for i in range(self.n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ W + b
            h = np.tanh(z) if i < self.n_layers - 1 else z
            activations.append(h)
        return (h, activations) if keep else h

    def backward(self, activations: List[np.ndarray], grad_out: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        """
        Gradients of a scalar loss given dL/d(output).

        Returns:
            (parameter gradients in `params` order, dL/d(input))
        """
        grads = [np.zeros_like(p) for p in self.params]
        delta = np.atleast_2d(grad_out)
        for i in range(self.n_layers - 1, -1, -1):
            W = self.params[2 * i]
            grads[2 * i] = activations[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            delta = delta @ W.T
            if i > 0:
                delta = delta * (1.0 - activations[i] ** 2)
        return grads, delta

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.reshape(-1) for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        cursor = 0
        for i, p in enumerate(self.params):
            self.params[i] = np.asarray(flat[cursor:cursor + p.size], dtype=float).reshape(p.shape).copy()
            cursor += p.size


class Adam:
    """Adam over a list of parameter arrays updated in place."""

    def __init__(self, params: List[np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class RunningNormalizer:
    """Running mean and variance (parallel-merge update), clipped standardization."""
    size: int
    clip: float = 10.0
    mean: np.ndarray = field(default=None)
    var: np.ndarray = field(default=None)
    count: float = 1e-4

    def __post_init__(self):
        if self.mean is None:
            self.mean = np.zeros(self.size)
        if self.var is None:
            self.var = np.ones(self.size)

    def update(self, batch: np.ndarray) -> None:
        batch = np.atleast_2d(batch)
        n = batch.shape[0]
        if n == 0:
            return
        batch_mean = batch.mean(axis=0)
        batch_var = batch.var(axis=0)
        total = self.count + n
        delta = batch_mean - self.mean
        self.mean = self.mean + delta * n / total
        self.var = (self.var * self.count + batch_var * n + delta ** 2 * self.count * n / total) / total
        self.count = total

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return np.clip((x - self.mean) / np.sqrt(self.var + 1e-8), -self.clip, self.clip)
