"""Loss functions, prior sampling and the optimal-discriminator oracle."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate
from scipy.stats import chisquare, norm

from breathmodel import objectives as O
from breathmodel.diffcore import Tensor, backward
from breathmodel.errors import ConfigError, NumericError

mus = st.floats(-2, 2)
sigmas = st.floats(0.3, 3)


def kl_quadrature(mu, sigma):
    """KL(N(mu, sigma^2) || N(0, 1)) per dimension by numerical integration."""
    total = 0.0
    for m, s in zip(np.ravel(mu), np.ravel(sigma)):
        q = norm(m, s)
        f = lambda z: q.pdf(z) * (q.logpdf(z) - norm.logpdf(z))  # noqa: E731
        total += integrate.quad(f, m - 12 * s, m + 12 * s, limit=200)[0]
    return total


class TestKL:
    def test_zero_at_standard_normal(self):
        assert O.kl_gaussian(np.zeros(5), np.ones(5)).item() == 0.0

    def test_known_value(self):
        # 0.5 * (2 - 1 - log 2)
        assert O.kl_gaussian([0.0], [math.sqrt(2.0)]).item() == pytest.approx(0.1534264097200273, abs=1e-15)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_quadrature(self, seed):
        rng = np.random.default_rng(seed)
        mu, sigma = rng.uniform(-2, 2, 4), rng.uniform(0.3, 3, 4)
        assert O.kl_gaussian(mu, sigma).item() == pytest.approx(kl_quadrature(mu, sigma), rel=1e-8)

    @pytest.mark.parametrize("seed", [10, 11])
    def test_matches_monte_carlo(self, seed):
        rng = np.random.default_rng(seed)
        mu, sigma = rng.uniform(-2, 2, 15), rng.uniform(0.3, 3, 15)
        z = mu + sigma * rng.standard_normal((1_000_000, 15))
        mc = np.mean(np.sum(norm.logpdf(z, mu, sigma) - norm.logpdf(z), axis=1))
        assert O.kl_gaussian(mu, sigma).item() == pytest.approx(mc, rel=0.01)

    @given(arrays(np.float64, 6, elements=mus), arrays(np.float64, 6, elements=sigmas))
    def test_nonnegative(self, mu, sigma):
        assert O.kl_gaussian(mu, sigma).item() >= -1e-15

    @given(mus, sigmas, st.integers(1, 20))
    def test_linear_in_dimension(self, m, s, n):
        one = O.kl_gaussian([m], [s]).item()
        assert O.kl_gaussian(np.full(n, m), np.full(n, s)).item() == pytest.approx(n * one, rel=1e-12, abs=1e-15)

    def test_batch_mean(self):
        mu = np.array([[0.0, 1.0], [1.0, 0.0]])
        sig = np.ones((2, 2))
        assert O.kl_gaussian(mu, sig).item() == pytest.approx(0.5)

    def test_logvar_form_agrees(self):
        rng = np.random.default_rng(3)
        mu, sigma = rng.normal(size=(4, 3)), rng.uniform(0.5, 2, (4, 3))
        a = O.kl_gaussian(mu, sigma).item()
        b = O.kl_from_logvar(Tensor(mu), Tensor(2 * np.log(sigma))).item()
        assert a == pytest.approx(b, rel=1e-12)

    def test_nonpositive_sigma(self):
        with pytest.raises(ValueError):
            O.kl_gaussian([0.0], [0.0])


class TestVaeLoss:
    def test_perfect_reconstruction_standard_posterior(self):
        x = np.random.default_rng(0).normal(size=(3, 25, 6))
        loss, rep = O.vae_loss(x, x, np.zeros((3, 4)), np.ones((3, 4)))
        assert loss.item() == 0.0 and rep.total == 0.0

    def test_beta_zero_is_pure_se(self):
        rng = np.random.default_rng(1)
        x, xh = rng.normal(size=(2, 5, 6)), rng.normal(size=(2, 5, 6))
        loss, rep = O.vae_loss(x, xh, rng.normal(size=(2, 3)), np.full((2, 3), 2.0), beta_n=0.0)
        assert loss.item() == pytest.approx(0.5 * np.sum((x - xh) ** 2) / 2)
        assert rep.kl > 0

    def test_hand_sum(self):
        x = np.array([[1.0, 2.0]])
        xh = np.array([[0.0, 4.0]])
        loss, rep = O.vae_loss(x, xh, np.array([[1.0]]), np.array([[1.0]]), beta_n=0.5)
        # 0.5 * (1 + 4) + 0.5 * 0.5 * 1
        assert loss.item() == pytest.approx(2.75, abs=1e-15)
        assert rep.reconstruction_se == pytest.approx(2.5) and rep.kl == pytest.approx(0.5)

    @pytest.mark.parametrize("batch", [1, 4])
    def test_decoder_gradient_is_residual(self, batch):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(batch, 25, 6))
        xh = Tensor(rng.normal(size=(batch, 25, 6)), requires_grad=True)
        loss, _ = O.vae_loss(x, xh, rng.normal(size=(batch, 3)), rng.uniform(0.5, 2, (batch, 3)))
        backward(loss)
        np.testing.assert_allclose(batch * xh.grad, xh.data - x, atol=1e-12, rtol=0)

    def test_negative_beta(self):
        with pytest.raises(ConfigError):
            O.vae_loss(np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((1, 1)), np.ones((1, 1)), beta_n=-1)

    def test_reparameterize(self):
        z = O.reparameterize(Tensor([1.0, 2.0]), Tensor([0.5, 3.0]), np.array([2.0, -1.0]))
        np.testing.assert_array_equal(z.data, [2.0, -1.0])

    def test_scaled_mse(self):
        assert O.scaled_mse(np.zeros((2, 2)), np.ones((2, 2)), 4.0).item() == 4.0

    def test_report_rejects_nan(self):
        with pytest.raises(NumericError):
            O.LossReport(total=float("nan"))


class TestAdversarialLosses:
    def test_zero_logits(self):
        assert O.discriminator_loss(np.zeros(8), np.zeros(8)).item() == 2 * math.log(2)

    def test_confident_correct_near_zero(self):
        assert O.discriminator_loss(np.full(4, 40.0), np.full(4, -40.0)).item() < 1e-15

    def test_mixed_vs_direct_formula(self):
        rng = np.random.default_rng(4)
        r, f = rng.normal(0, 3, 50), rng.normal(0, 3, 50)
        s = lambda a: 1 / (1 + np.exp(-a))  # noqa: E731
        direct = -np.mean(np.log(s(r))) - np.mean(np.log(1 - s(f)))
        assert O.discriminator_loss(r, f).item() == pytest.approx(direct, abs=1e-12)

    def test_extreme_logits_finite(self):
        assert math.isfinite(O.discriminator_loss(np.array([-800.0]), np.array([800.0])).item())

    def test_generator_nonsaturating_zero(self):
        assert O.generator_loss(np.zeros(3)).item() == pytest.approx(math.log(2))

    def test_generator_logit(self):
        assert O.generator_loss(np.full(4, 3.0), "logit").item() == -3.0

    def test_generator_saturating(self):
        f = np.array([0.3, -1.2])
        direct = np.mean(np.log(1 - 1 / (1 + np.exp(-f))))
        assert O.generator_loss(f, "saturating").item() == pytest.approx(direct, abs=1e-12)

    @pytest.mark.parametrize("style", O.GENERATOR_STYLES)
    @given(arrays(np.float64, 5, elements=st.floats(-20, 20)))
    def test_every_style_pushes_logits_up(self, style, f):
        t = Tensor(f, requires_grad=True)
        backward(O.generator_loss(t, style))
        assert np.all(t.grad < 0) or np.all(np.abs(t.grad) < 1e-9)

    def test_unknown_style(self):
        with pytest.raises(ConfigError):
            O.generator_loss(np.zeros(2), "wasserstein")


class TestClassificationLoss:
    def test_correct_one_hot_zero(self):
        y = np.eye(3)
        assert O.classification_loss(y, y, alpha=5).item() == 0.0

    def test_uniform(self):
        pi = np.full((4, 3), 1 / 3)
        assert O.classification_loss(pi, [0, 1, 2, 0], alpha=1).item() == pytest.approx(math.log(3), abs=1e-12)

    @given(st.floats(0.1, 10))
    def test_linear_in_alpha(self, alpha):
        pi = np.array([[0.7, 0.2, 0.1], [0.3, 0.3, 0.4]])
        one = O.classification_loss(pi, [0, 2], alpha=1).item()
        assert O.classification_loss(pi, [0, 2], alpha=2 * alpha).item() == pytest.approx(2 * alpha * one)

    def test_zero_probability_clamped(self):
        pi = np.array([[1.0, 0.0]])
        with pytest.warns(RuntimeWarning):
            loss = O.classification_loss(pi, [1], alpha=1).item()
        assert loss == pytest.approx(-math.log(1e-12))

    def test_logit_form_agrees(self):
        logits = np.random.default_rng(5).normal(size=(6, 3))
        pi = np.exp(logits) / np.exp(logits).sum(1, keepdims=True)
        y = [0, 1, 2, 2, 1, 0]
        assert O.classification_loss_logits(logits, y).item() == pytest.approx(O.classification_loss(pi, y).item())


class TestPrior:
    def test_mean_near_zero(self):
        z, y = O.sample_prior(O.PriorSpec(15), 100_000, np.random.default_rng(6))
        assert y is None
        assert np.all(np.abs(z.mean(axis=0)) < 0.02)

    def test_class_frequencies(self):
        _, y = O.sample_prior(O.PriorSpec(2, 3), 30_000, np.random.default_rng(7))
        np.testing.assert_array_equal(y.sum(axis=1), 1.0)
        assert chisquare(y.sum(axis=0)).pvalue > 1e-3

    def test_zero_latent_dim(self):
        with pytest.raises(ConfigError):
            O.PriorSpec(0)

    def test_bad_class_probs(self):
        with pytest.raises(ConfigError):
            O.PriorSpec(2, 2, (0.9, 0.2))

    def test_dict_round_trip(self):
        p = O.PriorSpec(4, 3, (0.2, 0.3, 0.5))
        assert O.PriorSpec.from_dict(p.to_dict()) == p

    @pytest.mark.parametrize("n", [1, 2, 15])
    def test_chi_mean(self, n):
        z = np.random.default_rng(n).standard_normal((400_000, n))
        assert O.chi_mean(n) == pytest.approx(np.linalg.norm(z, axis=1).mean(), rel=5e-3)


class TestOptimalDiscriminatorOracle:
    def test_equal_densities_zero(self):
        q = np.random.default_rng(8).normal(size=50_000)
        z = np.linspace(-1.5, 1.5, 7)
        np.testing.assert_allclose(O.optimal_discriminator_oracle(norm.pdf, q, z), 0.0, atol=0.05)

    def test_shifted_gaussian(self):
        q = np.random.default_rng(9).normal(1.0, 1.0, 100_000)
        z = np.linspace(-1.0, 2.0, 7)
        np.testing.assert_allclose(O.optimal_discriminator_oracle(norm.pdf, q, z), 0.5 - z, atol=0.08)

    def test_empty_support(self):
        with pytest.raises(ValueError):
            O.optimal_discriminator_oracle(norm.pdf, [], [0.0])
        with pytest.raises(ValueError):
            O.optimal_discriminator_oracle(norm.pdf, [1.0, 1.0], [0.0])
