"""SGD with momentum and Adam, updating parameter tensors in place."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .autograd import Tensor


@dataclass
class SGDMomentum:
    lr: float = 0.001
    momentum: float = 0.9
    velocity: dict = field(default_factory=dict)

    def step(self, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray]) -> None:
        for name, p in params.items():
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(p.data)
            v = self.momentum * v - self.lr * grads[name]
            self.velocity[name] = v
            p.data = (p.data + v).astype(p.data.dtype, copy=False)


@dataclass
class Adam:
    lr: float = 0.002
    beta1: float = 0.5
    beta2: float = 0.99
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            m = self.beta1 * self.m.get(name, 0.0) + (1 - self.beta1) * g
            v = self.beta2 * self.v.get(name, 0.0) + (1 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            upd = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = (p.data - upd).astype(p.data.dtype, copy=False)


def make_optimizer(kind: str, **hyper):
    if kind == "sgd-momentum":
        return SGDMomentum(**hyper)
    if kind == "adam":
        return Adam(**hyper)
    raise ValueError(f"unknown optimizer {kind!r}")


def optimizer_step(optimizer, params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray]) -> None:
    optimizer.step(params, grads)
