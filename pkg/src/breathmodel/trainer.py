"""Phase-structured training loops for the VAE, AAE, SAAE and baseline classifiers."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import models as M
from . import objectives as O
from .dataset import LabeledDataset
from .diffcore import functional as F
from .diffcore.optim import Adam
from .diffcore.tensor import Tensor, backward, concat, exp, no_grad
from .errors import ConfigError, NumericError, StratificationError
from .preprocess import NormStats, SlopeThresholds

VARIANT_LRS = {
    # (reconstruction, discriminator, classification)
    "vae": (1e-4, None, None),
    "aae": (2e-4, 1e-4, None),
    "saae": (1e-4, 2e-4, 1e-4),
    "classifier": (None, None, 1e-3),
    "recon": (1e-4, None, None),
}


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 256
    lr_reconstruction: float | None = None
    lr_discriminator: float | None = None
    lr_classification: float | None = None
    lr_generator: float | None = None
    lr_decay: float = 0.0
    beta_n: float = 0.02
    alpha: float = 5.0
    recon_scale: float = 4.0
    label_fraction: float = 1.0
    seed: int = 0
    validation_fraction: float = 0.1
    patience: int = 20
    latent_dim: int = 15
    generator_style: str = "nonsaturating"
    eta_sigma: float = 1.0
    collapse_threshold: float = 0.99
    collapse_epochs: int = 5

    def validate(self) -> "TrainConfig":
        if self.epochs < 1 or self.batch_size < 2:
            raise ConfigError("epochs must be >= 1 and batch_size >= 2")
        if not 0.0 < self.label_fraction <= 1.0:
            raise ConfigError("label_fraction must be in (0, 1]")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must be in [0, 1)")
        for name in ("lr_reconstruction", "lr_discriminator", "lr_classification", "lr_generator"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.beta_n < 0 or self.alpha < 0 or self.recon_scale <= 0:
            raise ConfigError("beta_n and alpha must be >= 0, recon_scale > 0")
        if self.generator_style not in O.GENERATOR_STYLES:
            raise ConfigError(f"unknown generator_style {self.generator_style!r}")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        return self

    def resolved(self, variant: str) -> "TrainConfig":
        """Fill unset learning rates with the variant defaults."""
        rec, disc, cls = VARIANT_LRS[variant]
        out = replace(
            self,
            lr_reconstruction=self.lr_reconstruction or rec,
            lr_discriminator=self.lr_discriminator or disc,
            lr_classification=self.lr_classification or cls,
        )
        if out.lr_generator is None and out.lr_discriminator is not None:
            out = replace(out, lr_generator=out.lr_discriminator)
        return out.validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown TrainConfig keys {sorted(unknown)}")
        return cls(**d)


SPEC_TYPES = {
    "encoder": (M.EncoderSpec, M.Encoder),
    "decoder": (M.DecoderSpec, M.Decoder),
    "discriminator": (M.DiscriminatorSpec, M.Discriminator),
    "classifier": (M.ClassifierSpec, M.Classifier),
}


def network_types(kind: str):
    if kind == "recon_net":
        from .reconstruct import ReconNet, ReconNetSpec

        return ReconNetSpec, ReconNet
    return SPEC_TYPES[kind]


@dataclass
class ModelBundle:
    """Trained networks plus everything needed to use them on new data."""

    variant: str
    networks: dict
    norm_stats: NormStats | None = None
    thresholds: SlopeThresholds | None = None
    prior: O.PriorSpec | None = None
    config: dict = field(default_factory=dict)
    log: list = field(default_factory=list)
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def encoder(self):
        return self.networks.get("encoder")

    @property
    def decoder(self):
        return self.networks.get("decoder")

    @property
    def discriminator(self):
        return self.networks.get("discriminator")

    @property
    def classifier(self):
        return self.networks.get("classifier")

    @property
    def num_classes(self) -> int:
        if self.prior is not None and self.prior.class_dim:
            return self.prior.class_dim
        if self.classifier is not None:
            return self.classifier.spec.num_classes
        return 0

    def specs(self) -> dict:
        return {k: net.spec.to_dict() for k, net in self.networks.items()}

    def predict(self, x) -> np.ndarray:
        """Class predictions (argmax of the class head / classifier) for normalized inputs."""
        if self.variant == "saae":
            _, pi = M.encode(self.encoder, x, eta=np.zeros((len(x), self.encoder.spec.noise_dim)))
            return np.argmax(pi, axis=1)
        if self.classifier is not None:
            return np.argmax(M.classify(self.classifier, x), axis=1)
        raise ConfigError(f"{self.variant} bundle has no classifier")

    def generate(self, n: int, rng: np.random.Generator, cls: int | None = None):
        """Decode ``n`` prior samples; returns ``(x_normalized, labels or None)``."""
        if self.decoder is None or self.prior is None:
            raise ConfigError(f"{self.variant} bundle cannot generate")
        z, y = O.sample_prior(self.prior, n, rng)
        if y is not None and cls is not None:
            if not 0 <= cls < self.prior.class_dim:
                raise ConfigError(f"class {cls} out of range")
            y = O.one_hot(np.full(n, cls), self.prior.class_dim)
        x = M.decode(self.decoder, z, y)
        return x, (None if y is None else np.argmax(y, axis=1))


# helpers ---------------------------------------------------------------------

def _batches(order: np.ndarray, batch_size: int):
    """Full batches only; the final partial batch is dropped."""
    for s in range(0, len(order) - batch_size + 1, batch_size):
        yield order[s : s + batch_size]


class _LabelCycler:
    """Endless reshuffled passes over the labeled indices."""

    def __init__(self, idx, batch_size, rng):
        self.idx = np.asarray(idx)
        self.bs = min(batch_size, len(self.idx))
        self.rng = rng
        self.order = np.empty(0, dtype=np.int64)
        self.pos = 0

    def next(self):
        if self.pos + self.bs > len(self.order):
            self.order = self.rng.permutation(self.idx)
            self.pos = 0
        out = self.order[self.pos : self.pos + self.bs]
        self.pos += self.bs
        return out


def _zero(*nets):
    for net in nets:
        for p in net.parameters().values():
            p.grad = None


def _check(loss: Tensor, what: str):
    if not math.isfinite(loss.item()):
        raise NumericError(f"{what} loss diverged ({loss.item()!r})")


def _holdout(n: int, config: TrainConfig, rng, exclude=None):
    """Split ``range(n)`` into (train, validation); indices in ``exclude`` stay in train."""
    if config.validation_fraction == 0:
        return np.arange(n), np.empty(0, dtype=np.int64)
    pool = np.arange(n) if exclude is None else np.setdiff1d(np.arange(n), exclude)
    k = int(round(config.validation_fraction * n))
    val = np.sort(rng.choice(pool, size=min(k, len(pool)), replace=False))
    train = np.setdiff1d(np.arange(n), val)
    return train, val


def macro_f1_score(pred, labels, c: int) -> float:
    from .evaluate import macro_f1

    return macro_f1(pred, labels, c, warn=False).mf1


def _eta(rng, n, spec, sigma):
    return rng.normal(0.0, sigma, (n, spec.noise_dim))


def _val_mse(enc, dec, x, variant) -> float:
    if len(x) == 0:
        return float("nan")
    out = M.encode(enc, x, eta=np.zeros((len(x), enc.spec.noise_dim)) if enc.spec.noise_dim else None)
    if variant == "vae":
        x_hat = M.decode(dec, out[0])
    elif variant == "aae":
        x_hat = M.decode(dec, out)
    else:
        x_hat = M.decode(dec, out[0], out[1])
    return float(np.mean((x_hat - x) ** 2))


class _EarlyStop:
    def __init__(self, patience, mode):
        self.patience, self.mode = patience, mode
        self.best = None
        self.best_epoch = -1
        self.state = None
        self.wait = 0

    def update(self, value, epoch, nets) -> bool:
        """Record ``value``; returns True when training should stop."""
        if value is None or not math.isfinite(value):
            return False
        better = self.best is None or (value < self.best if self.mode == "min" else value > self.best)
        if better:
            self.best, self.best_epoch, self.wait = value, epoch, 0
            self.state = {k: n.state() for k, n in nets.items()}
            return False
        self.wait += 1
        return self.wait >= self.patience

    def restore(self, nets):
        if self.state is not None:
            for k, n in nets.items():
                n.load_state(*self.state[k])


def _common_meta(dataset: LabeledDataset, train_idx, val_idx, extra=None):
    meta = {"dataset_digest": dataset.digest(), "n_train": int(len(train_idx)), "n_validation": int(len(val_idx))}
    meta.update(extra or {})
    return meta


def _finish(bundle_kw, stopper, nets, log):
    stopper.restore(nets)
    meta = bundle_kw.pop("meta")
    meta.update({"best_epoch": stopper.best_epoch, "best_validation": stopper.best,
                 "epochs_run": len(log)})
    return ModelBundle(networks=nets, log=log, meta=meta, **bundle_kw)


# training loops ----------------------------------------------------------------

def train_vae(dataset: LabeledDataset, config: TrainConfig, norm_stats=None, thresholds=None, on_epoch=None) -> ModelBundle:
    """Minimize the negative ELBO on (normalized) ``dataset``; returns the best-validation model."""
    cfg = config.resolved("vae")
    rng = np.random.default_rng([cfg.seed, 11])
    enc_spec, dec_spec, _ = M.matched_specs("vae", dataset.n_t, cfg.latent_dim)
    enc, dec = M.build_encoder(enc_spec, cfg.seed), M.build_decoder(dec_spec, cfg.seed)
    nets = {"encoder": enc, "decoder": dec}
    opt = Adam({**{f"e.{k}": p for k, p in enc.parameters().items()},
                **{f"d.{k}": p for k, p in dec.parameters().items()}}, cfg.lr_reconstruction, decay=cfg.lr_decay)
    train_idx, val_idx = _holdout(len(dataset), cfg, rng)
    x_all = dataset.x
    stopper, log = _EarlyStop(cfg.patience, "min"), []
    for epoch in range(cfg.epochs):
        enc.train(), dec.train()
        sums = {"loss": 0.0, "se": 0.0, "kl": 0.0}
        count = 0
        for b in _batches(rng.permutation(train_idx), cfg.batch_size):
            x = x_all[b]
            _zero(enc, dec)
            mu, logvar = enc(Tensor(x))
            z = O.reparameterize(mu, exp(logvar * 0.5), rng.standard_normal(mu.shape))
            loss, rep = O.vae_loss(x, dec(z), mu, beta_n=cfg.beta_n, logvar=logvar)
            _check(loss, "vae")
            backward(loss)
            opt.step()
            sums["loss"] += rep.total
            sums["se"] += rep.reconstruction_se
            sums["kl"] += rep.kl
            count += 1
        opt.end_epoch()
        val = _val_mse(enc, dec, x_all[val_idx], "vae")
        row = {"epoch": epoch, **{k: v / max(count, 1) for k, v in sums.items()}, "val_mse": val}
        log.append(row)
        if on_epoch is not None:
            on_epoch(row)
        if stopper.update(val, epoch, nets):
            break
    prior = O.PriorSpec(cfg.latent_dim)
    return _finish(dict(variant="vae", norm_stats=norm_stats, thresholds=thresholds, prior=prior,
                        config=cfg.to_dict(), seed=cfg.seed,
                        meta=_common_meta(dataset, train_idx, val_idx)), stopper, nets, log)


def _disc_accuracy(real_logits, fake_logits) -> float:
    return float((np.sum(real_logits > 0) + np.sum(fake_logits < 0)) / (len(real_logits) + len(fake_logits)))


class _CollapseWatch:
    def __init__(self, threshold, epochs):
        self.threshold, self.epochs, self.run = threshold, epochs, 0
        self.warned = False

    def update(self, acc, epoch):
        self.run = self.run + 1 if acc > self.threshold else 0
        if self.run >= self.epochs and not self.warned:
            warnings.warn(f"discriminator collapse: accuracy > {self.threshold} for {self.run} epochs "
                          f"(epoch {epoch})", RuntimeWarning, stacklevel=3)
            self.warned = True


def _adversarial_setup(variant, dataset, cfg, num_classes=0):
    enc_spec, dec_spec, disc_spec = M.matched_specs(variant, dataset.n_t, cfg.latent_dim, num_classes)
    enc = M.build_encoder(enc_spec, cfg.seed)
    dec = M.build_decoder(dec_spec, cfg.seed)
    disc = M.build_discriminator(disc_spec, cfg.seed)
    enc_params = {f"e.{k}": p for k, p in enc.parameters().items()}
    dec_params = {f"d.{k}": p for k, p in dec.parameters().items()}
    opts = {
        "reconstruction": Adam({**enc_params, **dec_params}, cfg.lr_reconstruction, decay=cfg.lr_decay),
        "discriminator": Adam(disc.parameters(), cfg.lr_discriminator, decay=cfg.lr_decay),
    }
    return enc, dec, disc, enc_params, opts


def train_aae(dataset: LabeledDataset, config: TrainConfig, norm_stats=None, thresholds=None, on_epoch=None) -> ModelBundle:
    """Alternate a reconstruction phase with the adversarial regularization phase.

    Per batch: (i) encoder+decoder on ``recon_scale`` * MSE; (ii) discriminator
    on prior vs encoded samples; (iii) encoder on the generator loss.
    """
    cfg = config.resolved("aae")
    rng = np.random.default_rng([cfg.seed, 12])
    enc, dec, disc, enc_params, opts = _adversarial_setup("aae", dataset, cfg)
    opts["generator"] = Adam(enc_params, cfg.lr_generator, decay=cfg.lr_decay)
    nets = {"encoder": enc, "decoder": dec, "discriminator": disc}
    prior = O.PriorSpec(cfg.latent_dim)
    train_idx, val_idx = _holdout(len(dataset), cfg, rng)
    x_all = dataset.x
    stopper, watch = _EarlyStop(cfg.patience, "min"), _CollapseWatch(cfg.collapse_threshold, cfg.collapse_epochs)
    log = []
    for epoch in range(cfg.epochs):
        for n in nets.values():
            n.train()
        sums = dict.fromkeys(("recon", "disc", "gen", "disc_acc"), 0.0)
        count = 0
        for b in _batches(rng.permutation(train_idx), cfg.batch_size):
            x = x_all[b]
            bs = len(b)
            # reconstruction
            _zero(enc, dec, disc)
            z = enc(Tensor(x), _eta(rng, bs, enc.spec, cfg.eta_sigma))
            loss_r = O.scaled_mse(x, dec(z), cfg.recon_scale)
            _check(loss_r, "reconstruction")
            backward(loss_r)
            opts["reconstruction"].step()
            # regularization: discriminator
            _zero(enc, dec, disc)
            with no_grad():
                z_f = enc(Tensor(x), _eta(rng, bs, enc.spec, cfg.eta_sigma)).data
            z_r, _ = O.sample_prior(prior, bs, rng)
            d_r, d_f = disc(Tensor(z_r)), disc(Tensor(z_f))
            loss_d = O.discriminator_loss(d_r, d_f)
            _check(loss_d, "discriminator")
            backward(loss_d)
            opts["discriminator"].step()
            # regularization: generator
            _zero(enc, dec, disc)
            z = enc(Tensor(x), _eta(rng, bs, enc.spec, cfg.eta_sigma))
            loss_g = O.generator_loss(disc(z), cfg.generator_style)
            _check(loss_g, "generator")
            backward(loss_g, enc.parameters())
            opts["generator"].step()
            sums["recon"] += loss_r.item()
            sums["disc"] += loss_d.item()
            sums["gen"] += loss_g.item()
            sums["disc_acc"] += _disc_accuracy(d_r.data, d_f.data)
            count += 1
        _zero(enc, dec, disc)
        for o in opts.values():
            o.end_epoch()
        row = {"epoch": epoch, **{k: v / max(count, 1) for k, v in sums.items()}}
        row["val_mse"] = _val_mse(enc, dec, x_all[val_idx], "aae")
        log.append(row)
        if on_epoch is not None:
            on_epoch(row)
        watch.update(row["disc_acc"], epoch)
        if stopper.update(row["val_mse"], epoch, nets):
            break
    return _finish(dict(variant="aae", norm_stats=norm_stats, thresholds=thresholds, prior=prior,
                        config=cfg.to_dict(), seed=cfg.seed,
                        meta=_common_meta(dataset, train_idx, val_idx)), stopper, nets, log)


def _check_labels(dataset, labels_subset, c):
    labels_subset = np.asarray(labels_subset, dtype=np.int64)
    if len(labels_subset) == 0:
        raise StratificationError("labels_subset is empty")
    y = dataset.labels[labels_subset]
    if np.any(y < 0):
        raise StratificationError("labels_subset references unlabeled samples")
    missing = sorted(set(range(c)) - set(y.tolist()))
    if missing:
        raise StratificationError(f"labels_subset has no samples of class(es) {missing}")
    return labels_subset


def _val_labels(dataset, val_idx):
    """Validation labels if the whole validation split is labeled, else None."""
    if len(val_idx) == 0:
        return None
    y = dataset.labels[val_idx]
    return y if np.all(y >= 0) else None


def train_saae(dataset: LabeledDataset, labels_subset, config: TrainConfig, norm_stats=None,
               thresholds=None, on_epoch=None) -> ModelBundle:
    """Three-phase semi-supervised training.

    Per batch: (i) reconstruction on encoder+decoder with the decoder fed
    ``[z, pi]`` and the joint-space generator term added; (ii) discriminator
    on prior ``(z, y)`` pairs vs encoded ``(z, pi)``; (iii) ``alpha``-weighted
    cross-entropy on a labeled batch, updating only the encoder.  Only the
    samples in ``labels_subset`` contribute label gradients; the validation
    split is drawn from the remaining samples.
    """
    cfg = config.resolved("saae")
    c = dataset.num_classes
    if c < 2:
        raise ConfigError("saae needs a dataset with >= 2 classes")
    labels_subset = _check_labels(dataset, labels_subset, c)
    rng = np.random.default_rng([cfg.seed, 13])
    enc, dec, disc, enc_params, opts = _adversarial_setup("saae", dataset, cfg, c)
    opts["classification"] = Adam(enc_params, cfg.lr_classification, decay=cfg.lr_decay)
    nets = {"encoder": enc, "decoder": dec, "discriminator": disc}
    prior = O.PriorSpec(cfg.latent_dim, c)
    train_idx, val_idx = _holdout(len(dataset), cfg, rng, exclude=labels_subset)
    y_val = _val_labels(dataset, val_idx)
    cycler = _LabelCycler(labels_subset, cfg.batch_size, rng)
    x_all, y_all = dataset.x, dataset.labels
    mode = "max" if y_val is not None else "min"
    stopper, watch = _EarlyStop(cfg.patience, mode), _CollapseWatch(cfg.collapse_threshold, cfg.collapse_epochs)
    log = []
    for epoch in range(cfg.epochs):
        for n in nets.values():
            n.train()
        sums = dict.fromkeys(("recon", "gen", "disc", "class", "disc_acc"), 0.0)
        count = 0
        for b in _batches(rng.permutation(train_idx), cfg.batch_size):
            x = x_all[b]
            bs = len(b)
            # reconstruction (+ joint-space generator term)
            _zero(enc, dec, disc)
            z, logits = enc(Tensor(x), _eta(rng, bs, enc.spec, cfg.eta_sigma))
            pi = F.softmax(logits)
            se = O.scaled_mse(x, dec(z, pi), cfg.recon_scale)
            gen = O.generator_loss(disc(concat([z, pi], axis=1)), cfg.generator_style)
            loss_r = se + gen
            _check(loss_r, "reconstruction")
            backward(loss_r, {**enc_params, **disc.parameters()})
            opts["reconstruction"].step()
            # regularization: discriminator
            _zero(enc, dec, disc)
            with no_grad():
                z_f, logits_f = enc(Tensor(x), _eta(rng, bs, enc.spec, cfg.eta_sigma))
                fake = np.concatenate([z_f.data, F.softmax(logits_f).data], axis=1)
            z_r, y_r = O.sample_prior(prior, bs, rng)
            d_r, d_f = disc(Tensor(np.concatenate([z_r, y_r], axis=1))), disc(Tensor(fake))
            loss_d = O.discriminator_loss(d_r, d_f)
            _check(loss_d, "discriminator")
            backward(loss_d)
            opts["discriminator"].step()
            # supervised classification
            _zero(enc, dec, disc)
            lb = cycler.next()
            _, logits_l = enc(Tensor(x_all[lb]), _eta(rng, len(lb), enc.spec, cfg.eta_sigma))
            loss_c = O.classification_loss_logits(logits_l, y_all[lb], cfg.alpha)
            _check(loss_c, "classification")
            backward(loss_c, enc.parameters())
            opts["classification"].step()
            sums["recon"] += se.item()
            sums["gen"] += gen.item()
            sums["disc"] += loss_d.item()
            sums["class"] += loss_c.item()
            sums["disc_acc"] += _disc_accuracy(d_r.data, d_f.data)
            count += 1
        _zero(enc, dec, disc)
        for o in opts.values():
            o.end_epoch()
        row = {"epoch": epoch, **{k: v / max(count, 1) for k, v in sums.items()}}
        row["val_mse"] = _val_mse(enc, dec, x_all[val_idx], "saae")
        row["val_mf1"] = float("nan")
        if y_val is not None:
            _, pi_v = M.encode(enc, x_all[val_idx], eta=np.zeros((len(val_idx), enc.spec.noise_dim)))
            row["val_mf1"] = macro_f1_score(np.argmax(pi_v, axis=1), y_val, c)
        log.append(row)
        if on_epoch is not None:
            on_epoch(row)
        watch.update(row["disc_acc"], epoch)
        if stopper.update(row["val_mf1"] if mode == "max" else row["val_mse"], epoch, nets):
            break
    return _finish(dict(variant="saae", norm_stats=norm_stats, thresholds=thresholds, prior=prior,
                        config=cfg.to_dict(), seed=cfg.seed,
                        meta=_common_meta(dataset, train_idx, val_idx,
                                          {"n_labels": int(len(labels_subset)),
                                           "class_names": dataset.meta.get("class_names")})),
                   stopper, nets, log)


def train_classifier(dataset: LabeledDataset, labels_subset, spec: M.ClassifierSpec, config: TrainConfig,
                     norm_stats=None, thresholds=None, on_epoch=None) -> ModelBundle:
    """Plain supervised cross-entropy on the labeled subset (one epoch = one pass over it)."""
    cfg = config.resolved("classifier")
    c = spec.num_classes
    labels_subset = _check_labels(dataset, labels_subset, c)
    rng = np.random.default_rng([cfg.seed, 14])
    net = M.build_classifier(spec, cfg.seed)
    nets = {"classifier": net}
    opt = Adam(net.parameters(), cfg.lr_classification, decay=cfg.lr_decay)
    _, val_idx = _holdout(len(dataset), cfg, rng, exclude=labels_subset)
    y_val = _val_labels(dataset, val_idx)
    x_all, y_all = dataset.x, dataset.labels
    bs = min(cfg.batch_size, len(labels_subset))
    mode = "max" if y_val is not None else "min"
    stopper, log = _EarlyStop(cfg.patience, mode), []
    for epoch in range(cfg.epochs):
        net.train()
        total, count = 0.0, 0
        for b in _batches(rng.permutation(labels_subset), bs):
            _zero(net)
            loss = O.classification_loss_logits(net(Tensor(x_all[b])), y_all[b], 1.0)
            _check(loss, "classification")
            backward(loss)
            opt.step()
            total += loss.item()
            count += 1
        opt.end_epoch()
        row = {"epoch": epoch, "class": total / max(count, 1), "val_mf1": float("nan")}
        if y_val is not None:
            row["val_mf1"] = macro_f1_score(np.argmax(M.classify(net, x_all[val_idx]), axis=1), y_val, c)
            metric = row["val_mf1"]
        else:
            metric = row["class"]
        log.append(row)
        if on_epoch is not None:
            on_epoch(row)
        if stopper.update(metric, epoch, nets):
            break
    return _finish(dict(variant="classifier", norm_stats=norm_stats, thresholds=thresholds, prior=None,
                        config=cfg.to_dict(), seed=cfg.seed,
                        meta=_common_meta(dataset, labels_subset, val_idx, {"architecture": spec.architecture})),
                   stopper, nets, log)


def train_discriminator(real, fake, spec: M.DiscriminatorSpec | None = None, epochs: int = 200,
                        batch_size: int = 256, lr: float = 1e-3, seed: int = 0) -> M.Discriminator:
    """Fit a discriminator alone on fixed real/fake sample sets (the regularization phase in isolation).

    At the optimum ``sigmoid(d(z)) = p(z) / (p(z) + q(z))`` for real density ``p``
    and fake density ``q``.
    """
    real = np.asarray(real, dtype=np.float64).reshape(len(real), -1)
    fake = np.asarray(fake, dtype=np.float64).reshape(len(fake), -1)
    if real.shape[1] != fake.shape[1]:
        raise ConfigError("real and fake samples differ in dimension")
    spec = spec or M.DiscriminatorSpec(input_dim=real.shape[1])
    disc = M.build_discriminator(spec, seed)
    opt = Adam(disc.parameters(), lr)
    rng = np.random.default_rng([seed, 16])
    bs = min(batch_size, len(real), len(fake))
    disc.train()
    for _ in range(epochs):
        for br, bf in zip(_batches(rng.permutation(len(real)), bs), _batches(rng.permutation(len(fake)), bs)):
            _zero(disc)
            loss = O.discriminator_loss(disc(Tensor(real[br])), disc(Tensor(fake[bf])))
            _check(loss, "discriminator")
            backward(loss)
            opt.step()
    _zero(disc)
    disc.eval()
    return disc


def save_bundle(bundle: ModelBundle, path) -> None:
    from .formats import write_bundle

    write_bundle(bundle, path)


def load_bundle(path) -> ModelBundle:
    from .formats import read_bundle

    return read_bundle(path)
