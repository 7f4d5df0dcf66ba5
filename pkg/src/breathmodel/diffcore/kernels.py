"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it was built and
``BREATHMODEL_PURE_PYTHON`` is not set to ``1``; otherwise the numpy
implementations in ``_kernels_py`` are used.  ``BACKEND`` names the active one.
"""
import os

import numpy as np

from . import _kernels_py

_compiled = None
if os.environ.get("BREATHMODEL_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"
_impl = _compiled if _compiled is not None else _kernels_py


def compiled_available() -> bool:
    return _compiled is not None


def get_backend(name: str):
    if name == "numpy":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


def im2col(x, kernel_size, dilation):
    return _impl.im2col(np.ascontiguousarray(x), kernel_size, dilation)


def col2im(dcols, dilation):
    return _impl.col2im(np.ascontiguousarray(dcols), dilation)


def maxpool_forward(x, pool):
    return _impl.maxpool_forward(np.ascontiguousarray(x), pool)


def maxpool_backward(dout, idx, t):
    return _impl.maxpool_backward(np.ascontiguousarray(dout), np.ascontiguousarray(idx), t)


def nearest_l1(z):
    return _impl.nearest_l1(np.ascontiguousarray(z, dtype=np.float64))
