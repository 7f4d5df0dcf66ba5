"""Parameterized layers and a sequential container built from declarative specs."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import SpecError
from . import functional as F
from .tensor import Tensor

LAYER_KINDS = ("dense", "conv1d", "maxpool1d", "upsample1d", "batchnorm", "dropout", "activation", "flatten", "reshape")


@dataclass
class LayerSpec:
    """Declarative description of one layer; unused attributes keep their defaults."""

    kind: str
    units: int = 0
    filters: int = 0
    kernel_size: int = 1
    dilation: int = 1
    pool: int = 1
    factor: int = 1
    p: float = 0.0
    activation: str = "linear"
    slope: float = 0.1
    init: str = "glorot"
    shape: tuple = ()

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise SpecError(f"unknown layer kind {self.kind!r}")
        if self.kernel_size < 1:
            raise SpecError("kernel_size must be >= 1")
        if self.dilation < 1:
            raise SpecError("dilation must be >= 1")
        if self.pool < 1 or self.factor < 1:
            raise SpecError("pool and factor must be >= 1")
        if not 0.0 <= self.p < 1.0:
            raise SpecError("dropout probability must be in [0, 1)")
        if self.activation not in F.ACTIVATIONS:
            raise SpecError(f"unknown activation {self.activation!r}")
        self.shape = tuple(self.shape)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shape"] = list(self.shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**d)


def init_weights(shape, fan_in, fan_out, scheme, rng):
    if scheme == "he":
        limit = np.sqrt(6.0 / fan_in)
    elif scheme == "glorot":
        limit = np.sqrt(6.0 / (fan_in + fan_out))
    else:
        raise SpecError(f"unknown init scheme {scheme!r}")
    return rng.uniform(-limit, limit, size=shape)


class Module:
    training = True
    name = ""

    def __call__(self, x: Tensor) -> Tensor:
        out = self.forward(x)
        if out is not x and out.name is None:
            out.name = self.name
        return out

    def forward(self, x):
        raise NotImplementedError

    def parameters(self) -> dict[str, Tensor]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def children(self):
        return []

    def train(self, mode: bool = True):
        self.training = mode
        for c in self.children():
            c.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def set_rng(self, rng: np.random.Generator):
        for c in self.children():
            c.set_rng(rng)

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))


class Dense(Module):
    def __init__(self, in_features, units, init, rng):
        self.weight = Tensor(init_weights((in_features, units), in_features, units, init, rng), requires_grad=True)
        self.bias = Tensor(np.zeros(units), requires_grad=True)

    def forward(self, x):
        return F.dense(x, self.weight, self.bias)

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}


class Conv1D(Module):
    def __init__(self, in_channels, filters, kernel_size, dilation, init, rng):
        fan_in, fan_out = kernel_size * in_channels, kernel_size * filters
        self.dilation = dilation
        self.kernel = Tensor(init_weights((kernel_size, in_channels, filters), fan_in, fan_out, init, rng),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(filters), requires_grad=True)

    def forward(self, x):
        return F.conv1d(x, self.kernel, self.bias, self.dilation)

    def parameters(self):
        return {"kernel": self.kernel, "bias": self.bias}


class BatchNorm(Module):
    def __init__(self, channels, momentum=0.9):
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum

    def forward(self, x):
        return F.batchnorm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                           self.training, self.momentum)

    def parameters(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}


class Dropout(Module):
    def __init__(self, p):
        self.p = p
        self.rng = None

    def forward(self, x):
        return F.dropout(x, self.p, self.training, self.rng)

    def set_rng(self, rng):
        self.rng = rng


class Lambda(Module):
    def __init__(self, fn):
        self.fn = fn

    def forward(self, x):
        return self.fn(x)


class Sequential(Module):
    """Ordered stack of named layers."""

    def __init__(self, layers: list[tuple[str, Module]]):
        self.layers = layers
        for name, layer in layers:
            layer.name = name

    def forward(self, x):
        for _, layer in self.layers:
            x = layer(x)
        return x

    def children(self):
        return [m for _, m in self.layers]

    def parameters(self):
        out = {}
        for name, layer in self.layers:
            for k, v in layer.parameters().items():
                out[f"{name}.{k}"] = v
        return out

    def buffers(self):
        out = {}
        for name, layer in self.layers:
            for k, v in layer.buffers().items():
                out[f"{name}.{k}"] = v
        return out

    def set_prefix(self, prefix: str):
        for name, layer in self.layers:
            layer.name = f"{prefix}.{name}"
        return self

    @classmethod
    def from_specs(cls, specs: list[LayerSpec], input_shape: tuple, rng: np.random.Generator):
        """Build layers in order, inferring each layer's input shape (batch axis excluded)."""
        layers = []
        shape = tuple(input_shape)
        for i, spec in enumerate(specs):
            layer, shape = _build(spec, shape, rng)
            layers.append((f"{i}_{spec.kind}", layer))
        seq = cls(layers)
        seq.output_shape = shape
        return seq


def _build(spec: LayerSpec, shape: tuple, rng):
    kind = spec.kind
    if kind == "dense":
        if len(shape) != 1:
            raise SpecError(f"dense expects flat input, got {shape}")
        return Dense(shape[0], spec.units, spec.init, rng), (spec.units,)
    if kind == "conv1d":
        if len(shape) != 2:
            raise SpecError(f"conv1d expects (time, channels) input, got {shape}")
        return Conv1D(shape[1], spec.filters, spec.kernel_size, spec.dilation, spec.init, rng), (shape[0], spec.filters)
    if kind == "maxpool1d":
        if spec.pool > shape[0]:
            raise SpecError(f"pool {spec.pool} exceeds time length {shape[0]}")
        pool = spec.pool
        return Lambda(lambda x: F.maxpool1d(x, pool)), (shape[0] // pool, shape[1])
    if kind == "upsample1d":
        factor = spec.factor
        return Lambda(lambda x: F.upsample1d(x, factor)), (shape[0] * factor, shape[1])
    if kind == "batchnorm":
        return BatchNorm(shape[-1]), shape
    if kind == "dropout":
        return Dropout(spec.p), shape
    if kind == "activation":
        act, slope = spec.activation, spec.slope
        return Lambda(lambda x: F.activation(x, act, slope)), shape
    if kind == "flatten":
        n = int(np.prod(shape))
        return Lambda(lambda x: x.reshape(x.shape[0], n)), (n,)
    if kind == "reshape":
        target = tuple(spec.shape)
        if int(np.prod(target)) != int(np.prod(shape)):
            raise SpecError(f"cannot reshape {shape} to {target}")
        return Lambda(lambda x: x.reshape((x.shape[0],) + target)), target
    raise SpecError(f"unknown layer kind {kind!r}")
