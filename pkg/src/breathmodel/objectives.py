"""Training objectives: Gaussian KL, ELBO, adversarial losses, weighted cross-entropy and prior sampling."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .diffcore import tensor as T
from .diffcore.tensor import Tensor, as_tensor
from .errors import ConfigError, NumericError

GENERATOR_STYLES = ("nonsaturating", "saturating", "logit")
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class PriorSpec:
    """``N(0, I_N)`` times ``Cat(class_probs)``; ``class_dim=0`` drops the categorical part."""

    latent_dim: int
    class_dim: int = 0
    class_probs: tuple | None = None

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ConfigError("prior latent_dim must be >= 1")
        if self.class_dim < 0:
            raise ConfigError("prior class_dim must be >= 0")
        if self.class_dim:
            probs = self.class_probs or (1.0 / self.class_dim,) * self.class_dim
            probs = tuple(float(p) for p in probs)
            if len(probs) != self.class_dim or min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-9:
                raise ConfigError("class_probs must be non-negative, length class_dim, and sum to 1")
            object.__setattr__(self, "class_probs", probs)
        elif self.class_probs:
            raise ConfigError("class_probs given without class_dim")

    def to_dict(self):
        return {"latent_dim": self.latent_dim, "class_dim": self.class_dim,
                "class_probs": list(self.class_probs) if self.class_probs else None}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["latent_dim"]), int(d.get("class_dim", 0)),
                   tuple(d["class_probs"]) if d.get("class_probs") else None)


@dataclass
class LossReport:
    reconstruction_se: float = 0.0
    kl: float = 0.0
    discriminator: float = 0.0
    generator: float = 0.0
    classification_ce: float = 0.0
    total: float = 0.0
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("reconstruction_se", "kl", "discriminator", "generator", "classification_ce", "total"):
            if not math.isfinite(getattr(self, name)):
                raise NumericError(f"loss term {name} is not finite")


def _positive_sigma(sigma):
    s = sigma.data if isinstance(sigma, Tensor) else np.asarray(sigma)
    if np.any(s <= 0):
        raise ValueError("sigma must be strictly positive")


def _batch_rows(a: Tensor) -> int:
    return a.shape[0] if a.ndim > 1 else 1


def kl_gaussian(mu, sigma) -> Tensor:
    """KL(N(mu, diag sigma^2) || N(0, I)) summed over dimensions, averaged over the batch (leading axis).

    1-D inputs are a single sample.
    """
    _positive_sigma(sigma)
    mu, sigma = as_tensor(mu), as_tensor(sigma)
    var = sigma * sigma
    per = (T.neg(T.log(var)) - 1.0 + var + mu * mu) * 0.5
    return T.tsum(per) * (1.0 / _batch_rows(mu))


def kl_from_logvar(mu, logvar) -> Tensor:
    """Same quantity parameterized by ``log sigma^2`` (avoids log(exp(.)) in training)."""
    mu, logvar = as_tensor(mu), as_tensor(logvar)
    per = (T.exp(logvar) - logvar - 1.0 + mu * mu) * 0.5
    return T.tsum(per) * (1.0 / _batch_rows(mu))


def reparameterize(mu, sigma, eps) -> Tensor:
    mu, sigma = as_tensor(mu), as_tensor(sigma)
    eps = np.asarray(eps.data if isinstance(eps, Tensor) else eps, dtype=np.float64)
    if eps.shape != mu.shape or sigma.shape != mu.shape:
        raise ValueError(f"shape mismatch mu {mu.shape}, sigma {sigma.shape}, eps {eps.shape}")
    return mu + sigma * Tensor(eps)


def squared_error(x, x_hat) -> Tensor:
    """Half the squared error summed per sample, averaged over the batch."""
    x_hat = as_tensor(x_hat)
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    diff = x_hat - Tensor(x)
    return T.tsum(diff * diff) * (0.5 / _batch_rows(x_hat))


def scaled_mse(x, x_hat, scale: float = 4.0) -> Tensor:
    """``scale`` times the per-element mean squared error (adversarial-model reconstruction term)."""
    x_hat = as_tensor(x_hat)
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    diff = x_hat - Tensor(x)
    return T.tmean(diff * diff) * float(scale)


def vae_loss(x, x_hat, mu, sigma=None, beta_n: float = 0.02, logvar=None):
    """Negative ELBO ``0.5 * ||x - x_hat||^2 + beta_n * KL``, batch averaged.

    Pass either ``sigma`` or ``logvar``.  Returns ``(loss_tensor, LossReport)``.
    """
    if beta_n < 0:
        raise ConfigError("beta_n must be >= 0")
    se = squared_error(x, x_hat)
    if logvar is not None:
        kl = kl_from_logvar(mu, logvar)
    else:
        kl = kl_gaussian(mu, sigma)
    loss = se + kl * float(beta_n)
    report = LossReport(reconstruction_se=se.item(), kl=kl.item(), total=loss.item(), weights={"beta_n": beta_n})
    return loss, report


def discriminator_loss(real_logits, fake_logits) -> Tensor:
    """``-E[log S(d_r)] - E[log(1 - S(d_f))]`` via softplus: ``-log S(a) = softplus(-a)``."""
    real, fake = as_tensor(real_logits), as_tensor(fake_logits)
    return T.tmean(T.softplus(-real)) + T.tmean(T.softplus(fake))


def generator_loss(fake_logits, style: str = "nonsaturating") -> Tensor:
    """Encoder-side adversarial loss; every style decreases as the fake logits grow."""
    fake = as_tensor(fake_logits)
    if style == "nonsaturating":
        return T.tmean(T.softplus(-fake))
    if style == "saturating":
        return T.neg(T.tmean(T.softplus(fake)))
    if style == "logit":
        return T.neg(T.tmean(fake))
    raise ConfigError(f"unknown generator style {style!r}; expected one of {GENERATOR_STYLES}")


def _one_hot_index(y, c):
    y = np.asarray(y.data if isinstance(y, Tensor) else y)
    if y.ndim == 2:
        if y.shape[1] != c:
            raise ValueError(f"one-hot labels have {y.shape[1]} columns, expected {c}")
        return np.argmax(y, axis=1)
    return y.astype(np.int64)


def classification_loss(pi, y, alpha: float = 5.0) -> Tensor:
    """``alpha`` times the batch mean of ``-log pi[true class]``.

    ``pi`` are probabilities; entries below 1e-12 at the true class are
    clamped (with a warning).  ``y`` is one-hot or integer class indices.
    """
    pi = as_tensor(pi)
    idx = _one_hot_index(y, pi.shape[1])
    picked = pi[np.arange(len(idx)), idx]
    if np.any(picked.data < PROB_FLOOR):
        warnings.warn("zero probability at the true class; clamped at 1e-12", RuntimeWarning, stacklevel=2)
    picked = T.clamp_min(picked, PROB_FLOOR)
    return T.neg(T.tmean(T.log(picked))) * float(alpha)


def classification_loss_logits(logits, y, alpha: float = 5.0) -> Tensor:
    """Same loss computed from logits through a log-softmax (used in training)."""
    from .diffcore.functional import log_softmax

    logits = as_tensor(logits)
    idx = _one_hot_index(y, logits.shape[1])
    logp = log_softmax(logits)
    return T.neg(T.tmean(logp[np.arange(len(idx)), idx])) * float(alpha)


def one_hot(labels, c: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), c))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def sample_prior(prior: PriorSpec, batch: int, rng: np.random.Generator):
    """Returns ``(z, y)``; ``y`` is a one-hot array, or ``None`` without a class part."""
    if batch < 0:
        raise ValueError("batch must be >= 0")
    z = rng.standard_normal((batch, prior.latent_dim))
    if not prior.class_dim:
        return z, None
    cls = rng.choice(prior.class_dim, size=batch, p=prior.class_probs)
    return z, one_hot(cls, prior.class_dim)


def chi_mean(n: int) -> float:
    """Mean of ||z|| for z ~ N(0, I_n)."""
    return math.sqrt(2.0) * math.exp(math.lgamma((n + 1) / 2.0) - math.lgamma(n / 2.0))


def optimal_discriminator_oracle(p_density, q_samples, z, bandwidth=None):
    """``log p(z) - log q_hat(z)`` with ``q_hat`` a Gaussian KDE of 1-D ``q_samples``.

    ``S`` of the result is ``p / (p + q_hat)``, the optimal discriminator output.
    """
    from scipy.stats import gaussian_kde

    q_samples = np.asarray(q_samples, dtype=np.float64).ravel()
    if len(q_samples) < 2 or np.ptp(q_samples) == 0:
        raise ValueError("q_samples need at least two distinct values (empty support)")
    kde = gaussian_kde(q_samples, bw_method=bandwidth)
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    p = np.asarray(p_density(z), dtype=np.float64)
    q = kde(z)
    if np.any(p <= 0) or np.any(q <= 0):
        raise ValueError("densities vanish at a query point (empty support)")
    return np.log(p) - np.log(q)
