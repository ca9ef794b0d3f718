"""Layers and optimizer built on the autodiff tape."""
from __future__ import annotations

import numpy as np

from .autodiff import Tensor, concat, matmul, sigmoid, tanh


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """U(-1/sqrt(fan_in), +1/sqrt(fan_in)), the usual dense-layer default."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    """y = x @ W + b with W of shape (n_in, n_out)."""

    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int, name: str):
        self.name = name
        self.W = Tensor(uniform_init(rng, (n_in, n_out), n_in), requires_grad=True)
        self.b = Tensor(uniform_init(rng, (n_out,), n_in), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.W) + self.b

    def parameters(self):
        return [(f"{self.name}.W", self.W), (f"{self.name}.b", self.b)]


class LSTMCell:
    """Standard gated recurrent cell; gate order in W is (input, forget, cell, output)."""

    def __init__(self, rng: np.random.Generator, n_in: int, n_hidden: int, name: str):
        self.name = name
        self.n_hidden = n_hidden
        fan_in = n_in + n_hidden
        self.W = Tensor(uniform_init(rng, (fan_in, 4 * n_hidden), fan_in), requires_grad=True)
        self.b = Tensor(uniform_init(rng, (4 * n_hidden,), fan_in), requires_grad=True)

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        n = self.n_hidden
        z = matmul(concat([x, h], axis=-1), self.W) + self.b
        i = sigmoid(z[..., 0 * n : 1 * n])
        f = sigmoid(z[..., 1 * n : 2 * n])
        g = tanh(z[..., 2 * n : 3 * n])
        o = sigmoid(z[..., 3 * n : 4 * n])
        c2 = f * c + i * g
        h2 = o * tanh(c2)
        return h2, c2

    def parameters(self):
        return [(f"{self.name}.W", self.W), (f"{self.name}.b", self.b)]


def global_grad_norm(params) -> float:
    total = 0.0
    for _, p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    return float(np.sqrt(total))


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale all gradients down so their global L2 norm is at most max_norm."""
    norm = global_grad_norm(params)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for _, p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class Adam:
    """Plain Adam with bias correction; state keyed by parameter identity."""

    def __init__(self, params, lr: float = 5e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in self.params}
        self._v = {name: np.zeros_like(p.data) for name, p in self.params}

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params:
            if p.grad is None:
                continue
            m = self._m[name] = b1 * self._m[name] + (1 - b1) * p.grad
            v = self._v[name] = b2 * self._v[name] + (1 - b2) * (p.grad * p.grad)
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
