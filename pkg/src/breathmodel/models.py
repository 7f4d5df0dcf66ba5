"""Encoder, decoder, discriminator and classifier networks for the VAE / AAE / SAAE variants."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .diffcore import functional as F
from .diffcore.layers import LayerSpec, Module, Sequential
from .diffcore.tensor import Tensor, concat, no_grad
from .errors import NumericError, ShapeError, SpecError

VARIANTS = ("vae", "aae", "saae")


def pool_schedule(n_t: int, stages: int = 4) -> list[int]:
    """Pool size per conv stage: 2 while the halved length stays >= 3, else 1 (25 -> 12, 6, 3, 3)."""
    sizes, t = [], n_t
    for _ in range(stages):
        if t // 2 >= 3:
            sizes.append(2)
            t //= 2
        else:
            sizes.append(1)
    return sizes


class _SpecMixin:
    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise SpecError(f"unknown {cls.__name__} fields {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class EncoderSpec(_SpecMixin):
    variant: str = "saae"
    n_t: int = 25
    latent_dim: int = 15
    class_dim: int = 0
    filters: tuple = (32, 64, 64, 128)
    kernel_size: int = 5
    dropout: float = 0.1
    hidden: int = 128
    noise_dim: int = 1
    slope: float = 0.1

    def __post_init__(self):
        self.filters = tuple(self.filters)
        if self.variant not in VARIANTS:
            raise SpecError(f"unknown variant {self.variant!r}")
        if self.latent_dim < 1:
            raise SpecError("latent_dim must be >= 1")
        if self.variant == "saae" and self.class_dim < 2:
            raise SpecError("saae encoder needs class_dim >= 2")
        if self.variant != "saae" and self.class_dim != 0:
            raise SpecError(f"{self.variant} encoder has no class head (class_dim must be 0)")
        if self.variant == "vae" and self.noise_dim != 0:
            self.noise_dim = 0
        if len(self.filters) != 4:
            raise SpecError("encoder uses exactly 4 conv layers")


@dataclass
class DecoderSpec(_SpecMixin):
    variant: str = "saae"
    n_t: int = 25
    latent_dim: int = 15
    class_dim: int = 0
    filters: tuple = (128, 64, 64, 32)
    dilations: tuple = (1, 2, 4, 8)
    kernel_size: int = 5
    dropout: float = 0.3
    hidden: int = 128
    slope: float = 0.1

    def __post_init__(self):
        self.filters, self.dilations = tuple(self.filters), tuple(self.dilations)
        if self.variant not in VARIANTS:
            raise SpecError(f"unknown variant {self.variant!r}")
        if self.variant == "saae" and self.class_dim < 2:
            raise SpecError("saae decoder needs class_dim >= 2")
        if self.variant != "saae" and self.class_dim != 0:
            raise SpecError(f"{self.variant} decoder takes no class input (class_dim must be 0)")
        if len(self.filters) != 4 or len(self.dilations) != 4:
            raise SpecError("decoder uses exactly 4 up-sampling conv layers")

    @property
    def input_dim(self) -> int:
        return self.latent_dim + self.class_dim


@dataclass
class DiscriminatorSpec(_SpecMixin):
    input_dim: int = 18
    hidden: tuple = (64, 64, 64, 64)
    slope: float = 0.1

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        if self.input_dim < 1:
            raise SpecError("discriminator input_dim must be >= 1")
        if len(self.hidden) != 4:
            raise SpecError("discriminator uses exactly 4 hidden layers")


@dataclass
class ClassifierSpec(_SpecMixin):
    architecture: str = "cnn"
    n_t: int = 25
    num_classes: int = 3
    filters: tuple = (32, 64, 64, 128)
    kernel_size: int = 5
    hidden: tuple = (128, 64)
    dropout: float = 0.1
    slope: float = 0.1

    def __post_init__(self):
        self.filters, self.hidden = tuple(self.filters), tuple(self.hidden)
        if self.architecture not in ("feedforward", "cnn"):
            raise SpecError(f"unknown classifier architecture {self.architecture!r}")
        if self.num_classes < 2:
            raise SpecError("classifier needs >= 2 classes")


def _conv_stage_specs(filters, kernel_size, pools, dropout, slope):
    specs = []
    for f, pool in zip(filters, pools):
        specs += [
            LayerSpec("conv1d", filters=f, kernel_size=kernel_size, init="he"),
            LayerSpec("activation", activation="leaky_relu", slope=slope),
            LayerSpec("maxpool1d", pool=pool),
            LayerSpec("batchnorm"),
            LayerSpec("dropout", p=dropout),
        ]
    specs.append(LayerSpec("flatten"))
    return specs


class Network(Module):
    """A set of named sub-modules with a shared dropout rng."""

    kind = "network"

    def __init__(self, spec, parts: dict[str, Module], seed: int):
        self.spec = spec
        self.parts = parts
        self.seed = seed
        for name, part in parts.items():
            if isinstance(part, Sequential):
                part.set_prefix(f"{self.kind}.{name}")
            else:
                part.name = f"{self.kind}.{name}"
        self.set_rng(np.random.default_rng([seed, 7]))

    def children(self):
        return list(self.parts.values())

    def parameters(self):
        out = {}
        for name, part in self.parts.items():
            for k, v in part.parameters().items():
                out[f"{name}.{k}"] = v
        return out

    def buffers(self):
        out = {}
        for name, part in self.parts.items():
            for k, v in part.buffers().items():
                out[f"{name}.{k}"] = v
        return out

    def load_state(self, params: dict, buffers: dict):
        for k, p in self.parameters().items():
            if p.shape != params[k].shape:
                raise ShapeError(f"parameter {k} has shape {p.shape}, stored {params[k].shape}")
            p.data[...] = params[k]
        for k, b in self.buffers().items():
            b[...] = buffers[k]

    def state(self) -> tuple[dict, dict]:
        return ({k: p.data.copy() for k, p in self.parameters().items()},
                {k: b.copy() for k, b in self.buffers().items()})


class Encoder(Network):
    kind = "encoder"

    def __init__(self, spec: EncoderSpec, seed: int = 0):
        rng = np.random.default_rng([seed, 1])
        pools = pool_schedule(spec.n_t)
        conv = Sequential.from_specs(_conv_stage_specs(spec.filters, spec.kernel_size, pools, spec.dropout, spec.slope),
                                     (spec.n_t, 6), rng)
        feat = conv.output_shape[0] + spec.noise_dim
        trunk = Sequential.from_specs([LayerSpec("dense", units=spec.hidden, init="he"),
                                       LayerSpec("activation", activation="leaky_relu", slope=spec.slope)],
                                      (feat,), rng)
        parts = {"conv": conv, "trunk": trunk}
        if spec.variant == "vae":
            parts["head"] = Sequential.from_specs([LayerSpec("dense", units=2 * spec.latent_dim)], (spec.hidden,), rng)
        else:
            parts["head"] = Sequential.from_specs([LayerSpec("dense", units=spec.latent_dim)], (spec.hidden,), rng)
        if spec.variant == "saae":
            parts["class_head"] = Sequential.from_specs([LayerSpec("dense", units=spec.class_dim)], (spec.hidden,), rng)
        super().__init__(spec, parts, seed)

    def __call__(self, x: Tensor, eta=None):
        """Returns ``(mu, logvar)`` for vae, ``z`` for aae, ``(z, class_logits)`` for saae."""
        spec = self.spec
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 3 or x.shape[1:] != (spec.n_t, 6):
            raise ShapeError(f"encoder expects (B, {spec.n_t}, 6), got {x.shape}")
        h = self.parts["conv"](x)
        if spec.noise_dim:
            if eta is None:
                raise ValueError(f"{spec.variant} encoder needs noise eta")
            eta = np.asarray(eta.data if isinstance(eta, Tensor) else eta, dtype=np.float64).reshape(len(x.data), -1)
            h = concat([h, Tensor(eta)], axis=1)
        h = self.parts["trunk"](h)
        out = self.parts["head"](h)
        if spec.variant == "vae":
            n = spec.latent_dim
            return out[:, :n], out[:, n:]
        if spec.variant == "aae":
            return out
        return out, self.parts["class_head"](h)


class Decoder(Network):
    kind = "decoder"

    def __init__(self, spec: DecoderSpec, seed: int = 0):
        rng = np.random.default_rng([seed, 2])
        pools = pool_schedule(spec.n_t)
        t0 = spec.n_t
        for p in pools:
            t0 //= p
        c0 = spec.filters[0]
        layers = [
            LayerSpec("dense", units=spec.hidden, init="he"),
            LayerSpec("activation", activation="leaky_relu", slope=spec.slope),
            LayerSpec("dense", units=t0 * c0, init="he"),
            LayerSpec("activation", activation="leaky_relu", slope=spec.slope),
            LayerSpec("reshape", shape=(t0, c0)),
        ]
        for f, d, factor in zip(spec.filters, spec.dilations, reversed(pools)):
            layers += [
                LayerSpec("upsample1d", factor=factor),
                LayerSpec("conv1d", filters=f, kernel_size=spec.kernel_size, dilation=d, init="he"),
                LayerSpec("activation", activation="leaky_relu", slope=spec.slope),
                LayerSpec("batchnorm"),
                LayerSpec("dropout", p=spec.dropout),
            ]
        layers += [LayerSpec("flatten"), LayerSpec("dense", units=spec.n_t * 6), LayerSpec("reshape", shape=(spec.n_t, 6))]
        body = Sequential.from_specs(layers, (spec.input_dim,), rng)
        super().__init__(spec, {"body": body}, seed)

    def __call__(self, z, y=None):
        spec = self.spec
        z = z if isinstance(z, Tensor) else Tensor(z)
        if spec.class_dim:
            if y is None:
                raise ShapeError("saae decoder needs a class vector y")
            y = y if isinstance(y, Tensor) else Tensor(y)
            if y.shape[1] != spec.class_dim:
                raise ShapeError(f"class vector has {y.shape[1]} entries, expected {spec.class_dim}")
            z = concat([z, y], axis=1)
        if z.ndim != 2 or z.shape[1] != spec.input_dim:
            raise ShapeError(f"decoder expects (B, {spec.input_dim}), got {z.shape}")
        return self.parts["body"](z)


class Discriminator(Network):
    kind = "discriminator"

    def __init__(self, spec: DiscriminatorSpec, seed: int = 0):
        rng = np.random.default_rng([seed, 3])
        layers = []
        for h in spec.hidden:
            layers += [LayerSpec("dense", units=h, init="he"), LayerSpec("activation", activation="leaky_relu", slope=spec.slope)]
        layers.append(LayerSpec("dense", units=1))
        super().__init__(spec, {"body": Sequential.from_specs(layers, (spec.input_dim,), rng)}, seed)

    def __call__(self, z):
        z = z if isinstance(z, Tensor) else Tensor(z)
        if z.ndim != 2 or z.shape[1] != self.spec.input_dim:
            raise ShapeError(f"discriminator expects (B, {self.spec.input_dim}), got {z.shape}")
        return self.parts["body"](z).reshape(-1)


class Classifier(Network):
    kind = "classifier"

    def __init__(self, spec: ClassifierSpec, seed: int = 0):
        rng = np.random.default_rng([seed, 4])
        if spec.architecture == "cnn":
            layers = _conv_stage_specs(spec.filters, spec.kernel_size, pool_schedule(spec.n_t), spec.dropout, spec.slope)
        else:
            layers = [LayerSpec("flatten")]
        for h in spec.hidden:
            layers += [LayerSpec("dense", units=h, init="he"), LayerSpec("activation", activation="leaky_relu", slope=spec.slope),
                       LayerSpec("dropout", p=spec.dropout)]
        layers.append(LayerSpec("dense", units=spec.num_classes))
        super().__init__(spec, {"body": Sequential.from_specs(layers, (spec.n_t, 6), rng)}, seed)

    def __call__(self, x):
        """Class logits; :func:`classify` applies the softmax."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        return self.parts["body"](x)


def build_encoder(spec: EncoderSpec, seed: int = 0) -> Encoder:
    return Encoder(spec, seed)


def build_decoder(spec: DecoderSpec, seed: int = 0) -> Decoder:
    return Decoder(spec, seed)


def build_discriminator(spec: DiscriminatorSpec, seed: int = 0) -> Discriminator:
    return Discriminator(spec, seed)


def build_classifier(spec: ClassifierSpec, seed: int = 0) -> Classifier:
    return Classifier(spec, seed)


def matched_specs(variant: str, n_t: int = 25, latent_dim: int = 15, class_dim: int = 0, **overrides):
    """Encoder/decoder/discriminator specs that agree on every shared dimension."""
    if variant != "saae":
        class_dim = 0
    enc = EncoderSpec(variant=variant, n_t=n_t, latent_dim=latent_dim, class_dim=class_dim,
                      **overrides.get("encoder", {}))
    dec = DecoderSpec(variant=variant, n_t=n_t, latent_dim=latent_dim, class_dim=class_dim,
                      **overrides.get("decoder", {}))
    disc = None
    if variant != "vae":
        disc = DiscriminatorSpec(input_dim=latent_dim + class_dim, **overrides.get("discriminator", {}))
    return enc, dec, disc


def _set_mode(net: Module, mode: str):
    if mode not in ("train", "infer"):
        raise ValueError("mode must be 'train' or 'infer'")
    net.train(mode == "train")


def _check_finite(*arrays):
    for a in arrays:
        if not np.isfinite(a).all():
            raise NumericError("network produced non-finite output")


def encode(network: Encoder, x, eta=None, rng=None, mode: str = "infer"):
    """Encode a batch without recording a graph.

    vae -> ``(mu, sigma)``; aae -> ``z``; saae -> ``(z, pi)`` with ``pi``
    the softmax class probabilities.  For aae/saae, ``eta`` (shape (B,) or
    (B, noise_dim)) is drawn from ``rng`` when omitted, or zero when both
    are omitted.
    """
    _set_mode(network, mode)
    x = np.asarray(x, dtype=np.float64)
    spec = network.spec
    if spec.noise_dim and eta is None:
        eta = rng.normal(size=(len(x), spec.noise_dim)) if rng is not None else np.zeros((len(x), spec.noise_dim))
    with no_grad():
        out = network(Tensor(x), eta)
    if spec.variant == "vae":
        mu, logvar = out
        sigma = np.exp(0.5 * logvar.data)
        _check_finite(mu.data, sigma)
        return mu.data, sigma
    if spec.variant == "aae":
        _check_finite(out.data)
        return out.data
    z, logits = out
    pi = F.softmax(logits).data
    _check_finite(z.data, pi)
    return z.data, pi


def decode(network: Decoder, z, y=None, mode: str = "infer") -> np.ndarray:
    _set_mode(network, mode)
    with no_grad():
        out = network(Tensor(np.asarray(z, dtype=np.float64)), None if y is None else np.asarray(y, dtype=np.float64))
    _check_finite(out.data)
    return out.data


def classify(network: Classifier, x, mode: str = "infer") -> np.ndarray:
    """Class probabilities (rows sum to 1)."""
    _set_mode(network, mode)
    with no_grad():
        logits = network(Tensor(np.asarray(x, dtype=np.float64)))
        probs = F.softmax(logits).data
    _check_finite(probs)
    return probs


def discriminate(network: Discriminator, z) -> np.ndarray:
    """Raw logits."""
    network.eval()
    with no_grad():
        return network(Tensor(np.asarray(z, dtype=np.float64))).data
