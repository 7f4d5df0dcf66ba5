"""Evaluation protocols: macro-F1, relative reconstruction error, CAS, distinguishability and latent diagnostics."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import ks_2samp

from . import models as M
from . import objectives as O
from .dataset import LabeledDataset
from .diffcore import kernels
from .errors import ConfigError, ShapeError


@dataclass
class EvalReport:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    mf1: float
    confusion: np.ndarray
    absent_classes: list = field(default_factory=list)
    cas_mean: float | None = None
    cas_std: float | None = None
    relative_recon_error: float | None = None
    histograms: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = [{"class": k, "precision": float(self.precision[k]), "recall": float(self.recall[k]),
                "f1": float(self.f1[k])} for k in range(len(self.f1))]
        out.append({"class": "macro", "precision": float(self.precision.mean()), "recall": float(self.recall.mean()),
                    "f1": self.mf1})
        return out

    def summary(self) -> str:
        lines = [f"mF1 {self.mf1:.4f}"]
        lines += [f"class {k}: p={p:.4f} r={r:.4f} f1={f:.4f}"
                  for k, (p, r, f) in enumerate(zip(self.precision, self.recall, self.f1))]
        if self.absent_classes:
            lines.append(f"absent classes (F1 set to 0): {self.absent_classes}")
        if self.cas_mean is not None:
            lines.append(f"CAS mF1 {self.cas_mean:.4f} +- {self.cas_std:.4f}")
        if self.relative_recon_error is not None:
            lines.append(f"relative reconstruction error {self.relative_recon_error:.2f}%")
        return "\n".join(lines)


def confusion_matrix(pred, labels, c: int) -> np.ndarray:
    """Rows are true classes, columns predictions."""
    pred, labels = np.asarray(pred, dtype=np.int64), np.asarray(labels, dtype=np.int64)
    if pred.shape != labels.shape:
        raise ShapeError("predictions and labels differ in length")
    if len(labels) and (labels.min() < 0 or labels.max() >= c or pred.min() < 0 or pred.max() >= c):
        raise ConfigError(f"class index outside [0, {c})")
    m = np.zeros((c, c), dtype=np.int64)
    np.add.at(m, (labels, pred), 1)
    return m


def macro_f1(pred, labels, c: int, warn: bool = True) -> EvalReport:
    """Per-class precision/recall/F1 and their unweighted mean; empty classes score 0."""
    m = confusion_matrix(pred, labels, c)
    tp = np.diag(m).astype(np.float64)
    pred_count, true_count = m.sum(axis=0), m.sum(axis=1)
    precision = np.divide(tp, pred_count, out=np.zeros(c), where=pred_count > 0)
    recall = np.divide(tp, true_count, out=np.zeros(c), where=true_count > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(c), where=denom > 0)
    absent = [k for k in range(c) if pred_count[k] == 0 and true_count[k] == 0]
    if absent and warn:
        warnings.warn(f"classes {absent} absent from predictions and labels; F1 set to 0", RuntimeWarning,
                      stacklevel=2)
    return EvalReport(precision, recall, f1, float(f1.mean()), m, absent)


# reconstruction ----------------------------------------------------------------

def reconstruct(bundle, x) -> np.ndarray:
    """Infer-mode autoencoding with zero encoder noise."""
    enc, dec = bundle.encoder, bundle.decoder
    eta = np.zeros((len(x), enc.spec.noise_dim)) if enc.spec.noise_dim else None
    out = M.encode(enc, x, eta=eta)
    if bundle.variant == "vae":
        return M.decode(dec, out[0])
    if bundle.variant == "aae":
        return M.decode(dec, out)
    return M.decode(dec, out[0], out[1])


def _random_copy(bundle, seed):
    from .trainer import ModelBundle

    nets = {k: type(n)(n.spec, seed) for k, n in bundle.networks.items() if k in ("encoder", "decoder")}
    return ModelBundle(bundle.variant, nets)


def relative_recon_error(bundle, x, baseline_seed: int = 1000, baseline=None) -> float:
    """Mean SE of ``bundle`` over mean SE of a randomly initialized same-architecture model, in percent."""
    x = np.asarray(x, dtype=np.float64)
    base = baseline if baseline is not None else _random_copy(bundle, baseline_seed)
    se_model = np.mean((reconstruct(bundle, x) - x) ** 2)
    se_base = np.mean((reconstruct(base, x) - x) ** 2)
    return float(100.0 * se_model / se_base)


def relative_recon_error_stats(bundle, x, seeds=(1000, 1001, 1002)):
    """Mean and std of the relative error over several baseline seeds."""
    vals = np.array([relative_recon_error(bundle, x, s) for s in seeds])
    return float(vals.mean()), float(vals.std())


# CAS ---------------------------------------------------------------------------

def cas_from_samples(x_gen, y_gen, x_real, y_real, c: int, spec: M.ClassifierSpec | None = None,
                     config=None, seed: int = 0) -> float:
    """Train a classifier on (``x_gen``, ``y_gen``) and return its mF1 on real data."""
    from .trainer import TrainConfig, train_classifier

    x_gen = np.asarray(x_gen, dtype=np.float64)
    spec = spec or M.ClassifierSpec(architecture="cnn", n_t=x_gen.shape[1], num_classes=c)
    config = replace(config or TrainConfig(epochs=30, patience=5), seed=seed)
    ds = LabeledDataset(x_gen, np.asarray(y_gen), None, {"class_names": [str(k) for k in range(c)]})
    # validation is drawn from the generated set; every generated sample is labeled
    n_train = len(ds) - int(round(config.validation_fraction * len(ds)))
    rng = np.random.default_rng([seed, 21])
    labeled = np.sort(rng.permutation(len(ds))[:n_train])
    bundle = train_classifier(ds, labeled, spec, config)
    pred = np.argmax(M.classify(bundle.classifier, x_real), axis=1)
    return macro_f1(pred, y_real, c, warn=False).mf1


def cas(bundle, x_real, y_real, n_generated: int, classifier_spec=None, repeats: int = 3, config=None,
        seed: int = 0):
    """Classification Accuracy Score of a semi-supervised generator: ``(mean, std, scores)``."""
    if bundle.variant != "saae":
        raise ConfigError(f"CAS needs a saae bundle, got {bundle.variant}")
    scores = []
    for r in range(repeats):
        rng = np.random.default_rng([seed, r, 22])
        x_gen, y_gen = bundle.generate(n_generated, rng)
        scores.append(cas_from_samples(x_gen, y_gen, x_real, y_real, bundle.num_classes, classifier_spec,
                                       config, seed=seed * 1000 + r))
    scores = np.array(scores)
    return float(scores.mean()), float(scores.std()), scores


# distinguishability ------------------------------------------------------------

@dataclass
class DistinguishReport:
    accuracy_mean: float
    accuracy_std: float
    bce_mean: float
    bce_std: float
    accuracies: np.ndarray
    bces: np.ndarray


def distinguishability_from_samples(real, fake, repeats: int = 3, config=None, seed: int = 0,
                                    test_fraction: float = 0.3) -> DistinguishReport:
    """Binary CNN trained to separate ``real`` from ``fake``; held-out accuracy and cross-entropy."""
    from .trainer import TrainConfig, train_classifier

    real, fake = np.asarray(real, dtype=np.float64), np.asarray(fake, dtype=np.float64)
    x = np.concatenate([real, fake])
    y = np.concatenate([np.zeros(len(real), dtype=np.int64), np.ones(len(fake), dtype=np.int64)])
    spec = M.ClassifierSpec(architecture="cnn", n_t=x.shape[1], num_classes=2)
    base = config or TrainConfig(epochs=20, patience=5)
    accs, bces = [], []
    for r in range(repeats):
        rng = np.random.default_rng([seed, r, 23])
        perm = rng.permutation(len(x))
        n_test = int(round(test_fraction * len(x)))
        test, train = perm[:n_test], np.sort(perm[n_test:])
        ds = LabeledDataset(x[train], y[train], None, {"class_names": ["real", "generated"]})
        # train_classifier validates on the unlabeled remainder of ds
        n_fit = len(train) - int(round(base.validation_fraction * len(train)))
        fit = np.sort(rng.permutation(len(train))[:n_fit])
        bundle = train_classifier(ds, fit, spec, replace(base, seed=seed * 1000 + r))
        probs = M.classify(bundle.classifier, x[test])
        p_true = np.clip(probs[np.arange(n_test), y[test]], 1e-12, 1.0)
        accs.append(float(np.mean(np.argmax(probs, axis=1) == y[test])))
        bces.append(float(-np.mean(np.log(p_true))))
    accs, bces = np.array(accs), np.array(bces)
    return DistinguishReport(float(accs.mean()), float(accs.std()), float(bces.mean()), float(bces.std()), accs, bces)


def distinguishability_test(bundle, x, source: str = "prior", repeats: int = 3, radius: float = 0.1,
                            config=None, seed: int = 0) -> DistinguishReport:
    """Separate reconstructed real data from decoded samples drawn from the prior or near encodings."""
    if source not in ("prior", "posterior_vicinity"):
        raise ConfigError(f"unknown source {source!r}")
    x = np.asarray(x, dtype=np.float64)
    real = reconstruct(bundle, x)
    rng = np.random.default_rng([seed, 24])
    if source == "prior":
        fake, _ = bundle.generate(len(x), rng)
    else:
        enc = bundle.encoder
        eta = np.zeros((len(x), enc.spec.noise_dim)) if enc.spec.noise_dim else None
        out = M.encode(enc, x, eta=eta)
        if bundle.variant == "vae":
            z, y = out[0], None
        elif bundle.variant == "aae":
            z, y = out, None
        else:
            z, y = out
        fake = M.decode(bundle.decoder, z + radius * rng.standard_normal(z.shape), y)
    return distinguishability_from_samples(real, fake, repeats, config, seed)


# latent diagnostics --------------------------------------------------------------

@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    values: np.ndarray

    @property
    def mode(self) -> float:
        k = int(np.argmax(self.counts))
        return float(0.5 * (self.edges[k] + self.edges[k + 1]))

    def rows(self):
        return [{"left": float(a), "right": float(b), "count": int(c)}
                for a, b, c in zip(self.edges[:-1], self.edges[1:], self.counts)]


def histogram(values, bins=50, value_range=None) -> Histogram:
    values = np.asarray(values, dtype=np.float64)
    counts, edges = np.histogram(values, bins=bins, range=value_range)
    return Histogram(edges, counts, values)


def latent_neighbor_distances(encodings, n: int | None = None, bins=50) -> Histogram:
    """Nearest-neighbour L1 distance of every encoding, divided by the latent dimension."""
    z = np.asarray(encodings, dtype=np.float64)
    if z.ndim != 2 or len(z) < 2:
        raise ShapeError("need at least 2 encodings of shape (n, N)")
    n = n or z.shape[1]
    return histogram(kernels.nearest_l1(z) / n, bins)


@dataclass
class NormComparison:
    encodings: Histogram
    prior: Histogram
    ks_statistic: float
    ks_pvalue: float


def latent_norm_distribution(encodings, prior_samples, bins=50) -> NormComparison:
    """L2-norm histograms on shared bins plus the two-sample KS statistic."""
    a = np.linalg.norm(np.asarray(encodings, dtype=np.float64), axis=1)
    b = np.linalg.norm(np.asarray(prior_samples, dtype=np.float64), axis=1)
    if len(a) == 0 or len(b) == 0:
        raise ShapeError("both sets must be non-empty")
    lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
    if hi == lo:
        hi = lo + 1.0
    ks = ks_2samp(a, b)
    return NormComparison(histogram(a, bins, (lo, hi)), histogram(b, bins, (lo, hi)), float(ks.statistic),
                          float(ks.pvalue))


def aggregated_posterior(bundle, x, rng: np.random.Generator, eta_sigma: float = 1.0) -> np.ndarray:
    """Encodings of ``x`` with fresh encoder noise (the ``z`` part only)."""
    enc = bundle.encoder
    eta = rng.normal(0.0, eta_sigma, (len(x), enc.spec.noise_dim)) if enc.spec.noise_dim else None
    out = M.encode(enc, x, eta=eta)
    if bundle.variant == "vae":
        mu, sigma = out
        return mu + sigma * rng.standard_normal(mu.shape)
    return out if bundle.variant == "aae" else out[0]


def grid_sample_2d(bundle, lo: float = -1.5, hi: float = 1.5, points: int = 25, cls: int | None = None):
    """Decode a ``points`` x ``points`` grid over a 2-D latent space: ``(grid_z, signals)``."""
    if bundle.prior is None or bundle.prior.latent_dim != 2:
        raise ConfigError("grid sampling needs a bundle with latent dimension 2")
    axis = np.linspace(lo, hi, points)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    y = None
    if bundle.prior.class_dim:
        y = O.one_hot(np.full(len(grid), 0 if cls is None else cls), bundle.prior.class_dim)
    return grid, M.decode(bundle.decoder, grid, y)
