"""Numpy implementations of the gather/scatter kernels.

These are the reference path; ``_ckernels`` must agree with them bitwise
(up to float summation order in ``col2im``).
"""
import numpy as np


def im2col(x, kernel_size, dilation):
    """(B, T, C) -> (B, T, K, C) with cols[b, t, k] = x[b, t - k*dilation] (zero if < 0)."""
    b, t, c = x.shape
    cols = np.zeros((b, t, kernel_size, c))
    for k in range(kernel_size):
        shift = k * dilation
        if shift < t:
            cols[:, shift:, k, :] = x[:, : t - shift, :]
    return cols


def col2im(dcols, dilation):
    """Adjoint of :func:`im2col`: (B, T, K, C) -> (B, T, C)."""
    b, t, kernel_size, c = dcols.shape
    dx = np.zeros((b, t, c))
    for k in range(kernel_size):
        shift = k * dilation
        if shift < t:
            dx[:, : t - shift, :] += dcols[:, shift:, k, :]
    return dx


def maxpool_forward(x, pool):
    """Non-overlapping max pool; returns output and absolute argmax time index (first on ties)."""
    b, t, c = x.shape
    t_out = t // pool
    windows = x[:, : t_out * pool, :].reshape(b, t_out, pool, c)
    local = windows.argmax(axis=2)
    out = np.take_along_axis(windows, local[:, :, None, :], axis=2)[:, :, 0, :]
    idx = local + (np.arange(t_out) * pool)[None, :, None]
    return np.ascontiguousarray(out), idx.astype(np.int64)


def maxpool_backward(dout, idx, t):
    b, t_out, c = dout.shape
    dx = np.zeros((b, t, c))
    bi = np.arange(b)[:, None, None]
    ci = np.arange(c)[None, None, :]
    dx[bi, idx, ci] = dout  # windows are disjoint so no index repeats
    return dx


def nearest_l1(z, chunk=512):
    """L1 distance from every row of ``z`` to its nearest other row."""
    z = np.ascontiguousarray(z, dtype=np.float64)
    n = len(z)
    out = np.empty(n)
    for start in range(0, n, chunk):
        block = z[start : start + chunk]
        d = np.abs(block[:, None, :] - z[None, :, :]).sum(axis=2)
        rows = np.arange(len(block))
        d[rows, start + rows] = np.inf
        out[start : start + chunk] = d.min(axis=1)
    return out
