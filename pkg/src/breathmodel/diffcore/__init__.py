"""Minimal reverse-mode differentiable computation engine."""
from . import functional, kernels
from .functional import (activation, batchnorm, conv1d, dense, dropout, leaky_relu, log_softmax, maxpool1d,
                         relu, sigmoid, softmax, tanh, upsample1d)
from .gradcheck import GradCheckReport, check_module, grad_check
from .layers import LayerSpec, Module, Sequential
from .optim import Adam, ParameterSet, restore, snapshot, zero_grads
from .tensor import Tensor, backward, concat, no_grad

__all__ = [
    "Adam", "GradCheckReport", "LayerSpec", "Module", "ParameterSet", "Sequential", "Tensor", "activation",
    "backward", "batchnorm", "check_module", "concat", "conv1d", "dense", "dropout", "functional",
    "grad_check", "kernels", "leaky_relu", "log_softmax", "maxpool1d", "no_grad", "relu", "restore",
    "sigmoid", "snapshot", "softmax", "tanh", "upsample1d", "zero_grads",
]
