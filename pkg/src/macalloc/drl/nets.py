"""Small fully connected networks with hand-written backprop, plus Adam."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class MLP:
    """tanh hidden layers, linear output.  Parameters live in a flat dict.

    Weights are Glorot-uniform from the given generator, biases zero; the
    output layer is scaled by ``out_scale`` so a fresh policy starts close to
    uniform.
    """

    def __init__(self, sizes, rng: np.random.Generator | None = None, out_scale: float = 1.0):
        self.sizes = [int(s) for s in sizes]
        self.params: dict[str, np.ndarray] = {}
        n = len(self.sizes) - 1
        for k in range(n):
            fan_in, fan_out = self.sizes[k], self.sizes[k + 1]
            if rng is None:
                W = np.zeros((fan_in, fan_out))
            else:
                lim = math.sqrt(6.0 / (fan_in + fan_out))
                W = rng.uniform(-lim, lim, (fan_in, fan_out))
                if k == n - 1:
                    W *= out_scale
            self.params[f"W{k}"] = W
            self.params[f"b{k}"] = np.zeros(fan_out)

    @property
    def num_layers(self) -> int:
        return len(self.sizes) - 1

    def num_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def forward(self, x):
        """Output and the cache needed by ``backward``."""
        h = np.atleast_2d(x)
        acts = [h]
        for k in range(self.num_layers):
            z = h @ self.params[f"W{k}"] + self.params[f"b{k}"]
            h = np.tanh(z) if k < self.num_layers - 1 else z
            acts.append(h)
        return h, acts

    def backward(self, acts, grad_out) -> dict:
        grads = {}
        g = grad_out
        for k in reversed(range(self.num_layers)):
            grads[f"W{k}"] = acts[k].T @ g
            grads[f"b{k}"] = g.sum(axis=0)
            if k > 0:
                g = (g @ self.params[f"W{k}"].T) * (1.0 - acts[k] ** 2)
        return grads

    def copy(self) -> "MLP":
        out = MLP.__new__(MLP)
        out.sizes = list(self.sizes)
        out.params = {k: v.copy() for k, v in self.params.items()}
        return out


def clip_by_norm(grads: dict, max_norm: float) -> float:
    """Scale ``grads`` in place to global norm at most ``max_norm``; return the raw norm."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


@dataclass
class Adam:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def update(self, params: dict, grads: dict) -> None:
        """Gradient descent step on ``params`` (in place)."""
        self.step += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.step
        c2 = 1.0 - b2**self.step
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
