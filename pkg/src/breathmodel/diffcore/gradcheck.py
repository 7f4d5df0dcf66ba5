"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import Tensor, backward


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_name: str | None
    worst_index: tuple | None
    tolerance: float
    per_tensor: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(analytic, numeric, floor=1e-6):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def grad_check(fn: Callable[[], Tensor], tensors: dict[str, Tensor], eps: float = 1e-5,
               tolerance: float = 1e-4, floor: float = 1e-6) -> GradCheckReport:
    """Compare analytic gradients of the scalar ``fn()`` against central differences.

    ``fn`` must be deterministic (reseed any dropout rng inside it).  Every
    coordinate of every tensor in ``tensors`` is perturbed.
    """
    for t in tensors.values():
        t.grad = None
        t.requires_grad = True
    loss = fn()
    backward(loss, params=tensors)
    analytic = {k: t.grad.copy() for k, t in tensors.items()}
    for t in tensors.values():
        t.grad = None

    worst, worst_name, worst_idx = 0.0, None, None
    per_tensor = {}
    for name, t in tensors.items():
        num = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = fn().item()
            flat[i] = orig - eps
            fm = fn().item()
            flat[i] = orig
            nflat[i] = (fp - fm) / (2.0 * eps)
        err = relative_error(analytic[name], num, floor)
        per_tensor[name] = float(err.max()) if err.size else 0.0
        if err.size and err.max() > worst:
            worst = float(err.max())
            worst_name = name
            worst_idx = tuple(int(i) for i in np.unravel_index(int(err.argmax()), err.shape))
    return GradCheckReport(worst, worst_name, worst_idx, tolerance, per_tensor)


def check_module(module, x: np.ndarray, seed: int = 0, include_input: bool = True, **kw) -> GradCheckReport:
    """Grad-check every parameter (and the input) of ``module`` under a random linear read-out."""
    xt = Tensor(np.array(x, dtype=np.float64), requires_grad=True)
    probe_rng = np.random.default_rng(seed + 1)
    probe = None

    def fn():
        nonlocal probe
        module.set_rng(np.random.default_rng(seed))
        out = module(xt)
        if probe is None:
            probe = probe_rng.normal(size=out.shape)
        return (out * probe).sum()

    tensors = dict(module.parameters())
    if include_input:
        tensors["input"] = xt
    return grad_check(fn, tensors, **kw)
