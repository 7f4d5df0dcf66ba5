"""Differentiable layer primitives on (batch, time, channels) or (batch, features) tensors."""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import kernels
from .tensor import Tensor, _sigmoid, as_tensor, make

BN_EPS = 1e-5


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, dilation: int = 1) -> Tensor:
    """Causal dilated convolution with zero padding; output keeps the input length.

    ``out[b, j, f] = sum_k sum_h kernel[k, h, f] * x[b, j - k*dilation, h]``
    for ``k = 0..K-1``, with out-of-range samples read as zero.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 3 or kernel.ndim != 3:
        raise ShapeError(f"conv1d expects (B,T,C) input and (K,C,F) kernel, got {x.shape} and {kernel.shape}")
    if dilation < 1:
        raise ShapeError("dilation must be >= 1")
    b, t, c = x.shape
    k, kc, f = kernel.shape
    if kc != c:
        raise ShapeError(f"conv1d channel mismatch: input has {c}, kernel expects {kc}")
    cols = kernels.im2col(x.data, k, dilation).reshape(b * t, k * c)
    wmat = kernel.data.reshape(k * c, f)
    out = cols @ wmat
    if bias is not None:
        out += bias.data
    out = out.reshape(b, t, f)

    def bw(g):
        g2 = g.reshape(b * t, f)
        dw = (cols.T @ g2).reshape(k, c, f) if kernel.requires_grad else None
        dx = kernels.col2im((g2 @ wmat.T).reshape(b, t, k, c), dilation) if x.requires_grad else None
        if bias is None:
            return dx, dw
        return dx, dw, g2.sum(axis=0)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return make(out, parents, bw, "conv1d")


def dense(x: Tensor, weights: Tensor, bias: Tensor | None = None) -> Tensor:
    x, weights = as_tensor(x), as_tensor(weights)
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeError(f"dense shape mismatch: {x.shape} @ {weights.shape}")
    xd, wd = x.data, weights.data
    out = xd @ wd
    if bias is not None:
        out = out + bias.data

    def bw(g):
        dx = g @ wd.T if x.requires_grad else None
        dw = xd.T @ g if weights.requires_grad else None
        if bias is None:
            return dx, dw
        return dx, dw, g.sum(axis=0)

    parents = (x, weights) if bias is None else (x, weights, bias)
    return make(out, parents, bw, "dense")


def maxpool1d(x: Tensor, pool: int) -> Tensor:
    if pool < 1:
        raise ShapeError("pool must be >= 1")
    t = x.shape[1]
    if pool > t:
        raise ShapeError(f"pool {pool} exceeds time length {t}")
    if pool == 1:
        return x
    out, idx = kernels.maxpool_forward(x.data, pool)
    return make(out, (x,), lambda g: (kernels.maxpool_backward(g, idx, t),), "maxpool1d")


def upsample1d(x: Tensor, factor: int) -> Tensor:
    if factor < 1:
        raise ShapeError("factor must be >= 1")
    if factor == 1:
        return x
    b, t, c = x.shape
    return make(
        np.repeat(x.data, factor, axis=1),
        (x,),
        lambda g: (g.reshape(b, t, factor, c).sum(axis=2),),
        "upsample1d",
    )


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
              training: bool, momentum: float = 0.9, eps: float = BN_EPS) -> Tensor:
    """Per-channel normalization over every axis but the last.

    In training mode the running statistics are updated in place.
    """
    axes = tuple(range(x.ndim - 1))
    xd = x.data
    if training:
        if x.shape[0] < 2:
            raise ShapeError("batchnorm in train mode needs batch >= 2")
        mu = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv_std
    gd = gamma.data
    out = xhat * gd + beta.data
    n = xd.size // xd.shape[-1]

    def bw(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gd
        if training:
            dx = inv_std / n * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
        else:
            dx = dxhat * inv_std
        return dx, dgamma, dbeta

    return make(out, (x, gamma, beta), bw, "batchnorm")


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None,
            mask: np.ndarray | None = None) -> Tensor:
    """Inverted dropout; ``mask`` (already scaled) overrides sampling."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    if not training or p == 0.0:
        return x
    if mask is None:
        if rng is None:
            raise ValueError("dropout in train mode needs an rng or a mask")
        mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return make(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


# activations -----------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return make(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,), "relu")


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    scale = np.where(x.data > 0, 1.0, slope)
    return make(x.data * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return make(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return make(t, (x,), lambda g: (g * (1.0 - t * t),), "tanh")


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax over the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return make(s, (x,), bw, "softmax")


def log_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    s = np.exp(out)
    return make(out, (x,), lambda g: (g - s * g.sum(axis=-1, keepdims=True),), "log_softmax")


def activation(x: Tensor, kind: str, slope: float = 0.1) -> Tensor:
    if kind == "linear":
        return x
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "softmax":
        return softmax(x)
    raise ValueError(f"unknown activation {kind!r}")


ACTIVATIONS = ("linear", "relu", "leaky_relu", "sigmoid", "tanh", "softmax")
