"""Adam with bias correction and optional per-epoch learning-rate decay."""
from __future__ import annotations

import numpy as np

from ..errors import GraphError
from .tensor import Tensor

ParameterSet = dict  # name -> Tensor


class Adam:
    def __init__(self, params: ParameterSet, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, decay: float = 0.0):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = dict(params)
        self.base_lr = lr
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.decay = decay
        self.epoch = 0
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        missing = [k for k, p in self.params.items() if p.grad is None]
        if missing:
            raise GraphError(f"missing gradients for {missing[:3]}{'...' if len(missing) > 3 else ''}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def end_epoch(self):
        """Apply inverse-time decay: lr = base_lr / (1 + decay * epochs_done)."""
        self.epoch += 1
        self.lr = self.base_lr / (1.0 + self.decay * self.epoch)

    def state(self) -> dict:
        return {"t": self.t, "epoch": self.epoch, "lr": self.lr}


def zero_grads(*param_sets):
    for ps in param_sets:
        for p in ps.values():
            p.grad = None


def snapshot(params: ParameterSet) -> dict[str, np.ndarray]:
    return {k: p.data.copy() for k, p in params.items()}


def restore(params: ParameterSet, values: dict[str, np.ndarray]):
    for k, p in params.items():
        p.data[...] = values[k]


__all__ = ["Adam", "ParameterSet", "Tensor", "zero_grads", "snapshot", "restore"]
