# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled gather/scatter kernels; same contracts as ``_kernels_py``."""
import numpy as np
from libc.math cimport fabs, INFINITY


def im2col(const double[:, :, ::1] x, Py_ssize_t kernel_size, Py_ssize_t dilation):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], C = x.shape[2]
    out = np.zeros((B, T, kernel_size, C))
    cdef double[:, :, :, ::1] cols = out
    cdef Py_ssize_t b, t, k, c, src
    with nogil:
        for b in range(B):
            for t in range(T):
                for k in range(kernel_size):
                    src = t - k * dilation
                    if src < 0:
                        break
                    for c in range(C):
                        cols[b, t, k, c] = x[b, src, c]
    return out


def col2im(const double[:, :, :, ::1] dcols, Py_ssize_t dilation):
    cdef Py_ssize_t B = dcols.shape[0], T = dcols.shape[1], K = dcols.shape[2], C = dcols.shape[3]
    out = np.zeros((B, T, C))
    cdef double[:, :, ::1] dx = out
    cdef Py_ssize_t b, t, k, c, src
    with nogil:
        for b in range(B):
            for k in range(K):
                for t in range(k * dilation, T):
                    src = t - k * dilation
                    for c in range(C):
                        dx[b, src, c] += dcols[b, t, k, c]
    return out


def maxpool_forward(const double[:, :, ::1] x, Py_ssize_t pool):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], C = x.shape[2]
    cdef Py_ssize_t T_out = T // pool
    out_arr = np.empty((B, T_out, C))
    idx_arr = np.empty((B, T_out, C), dtype=np.int64)
    cdef double[:, :, ::1] out = out_arr
    cdef long long[:, :, ::1] idx = idx_arr
    cdef Py_ssize_t b, j, c, i, best_i
    cdef double best, v
    with nogil:
        for b in range(B):
            for j in range(T_out):
                for c in range(C):
                    best_i = j * pool
                    best = x[b, best_i, c]
                    for i in range(j * pool + 1, (j + 1) * pool):
                        v = x[b, i, c]
                        if v > best:
                            best = v
                            best_i = i
                    out[b, j, c] = best
                    idx[b, j, c] = best_i
    return out_arr, idx_arr


def maxpool_backward(const double[:, :, ::1] dout, const long long[:, :, ::1] idx, Py_ssize_t T):
    cdef Py_ssize_t B = dout.shape[0], T_out = dout.shape[1], C = dout.shape[2]
    out = np.zeros((B, T, C))
    cdef double[:, :, ::1] dx = out
    cdef Py_ssize_t b, j, c
    with nogil:
        for b in range(B):
            for j in range(T_out):
                for c in range(C):
                    dx[b, idx[b, j, c], c] += dout[b, j, c]
    return out


def nearest_l1(const double[:, ::1] z):
    cdef Py_ssize_t n = z.shape[0], d = z.shape[1]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double best, acc
    with nogil:
        for i in range(n):
            best = INFINITY
            for j in range(n):
                if j == i:
                    continue
                acc = 0.0
                for k in range(d):
                    acc = acc + fabs(z[i, k] - z[j, k])
                    if acc >= best:
                        break
                if acc < best:
                    best = acc
            out[i] = best
    return out_arr
