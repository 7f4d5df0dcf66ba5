"""Network construction, inference helpers and composite-network gradients."""
import numpy as np
import pytest

from breathmodel import models as M
from breathmodel.diffcore import Tensor, grad_check
from breathmodel.diffcore.functional import softmax
from breathmodel.errors import NumericError, ShapeError, SpecError

RNG = np.random.default_rng(0)
X = RNG.normal(size=(4, 25, 6))


def small(variant, c=0, n=3):
    """Narrow but topologically identical specs, cheap enough for finite differences."""
    over = {"encoder": dict(filters=(2, 3, 3, 2), hidden=4, kernel_size=3),
            "decoder": dict(filters=(2, 2, 3, 2), hidden=4, kernel_size=3),
            "discriminator": dict(hidden=(3, 3, 3, 3))}
    return M.matched_specs(variant, n_t=9, latent_dim=n, class_dim=c, **over)


class TestShapes:
    def test_pool_schedule(self):
        assert M.pool_schedule(25) == [2, 2, 2, 1]
        assert M.pool_schedule(100) == [2, 2, 2, 2]
        assert M.pool_schedule(5) == [1, 1, 1, 1]

    def test_vae_encoder(self):
        enc = M.build_encoder(M.EncoderSpec("vae", latent_dim=15))
        mu, sigma = M.encode(enc, X)
        assert mu.shape == sigma.shape == (4, 15)
        assert np.all(sigma > 0)

    def test_aae_encoder(self):
        enc = M.build_encoder(M.EncoderSpec("aae", latent_dim=7))
        assert M.encode(enc, X, eta=np.zeros(4)).shape == (4, 7)

    def test_saae_encoder_pi_sums_to_one(self):
        enc = M.build_encoder(M.EncoderSpec("saae", latent_dim=15, class_dim=3))
        z, pi = M.encode(enc, X, rng=np.random.default_rng(1))
        assert z.shape == (4, 15) and pi.shape == (4, 3)
        np.testing.assert_allclose(pi.sum(axis=1), 1.0, atol=1e-12)

    def test_saae_decoder(self):
        dec = M.build_decoder(M.DecoderSpec("saae", latent_dim=15, class_dim=3))
        out = M.decode(dec, RNG.normal(size=(5, 15)), np.eye(3)[[0, 1, 2, 0, 1]])
        assert out.shape == (5, 25, 6)

    @pytest.mark.parametrize("variant", ["vae", "aae"])
    def test_plain_decoder(self, variant):
        dec = M.build_decoder(M.DecoderSpec(variant, latent_dim=4))
        assert M.decode(dec, np.zeros((2, 4))).shape == (2, 25, 6)

    def test_decoder_long_vectors(self):
        dec = M.build_decoder(M.DecoderSpec("aae", n_t=100, latent_dim=4))
        assert M.decode(dec, np.zeros((2, 4))).shape == (2, 100, 6)

    def test_discriminator_joint_input(self):
        _, _, disc = M.matched_specs("saae", latent_dim=15, class_dim=3)
        assert disc.input_dim == 18
        d = M.build_discriminator(disc)
        assert M.discriminate(d, np.zeros((6, 18))).shape == (6,)

    @pytest.mark.parametrize("arch", ["feedforward", "cnn"])
    def test_classifier_rows_sum_to_one(self, arch):
        clf = M.build_classifier(M.ClassifierSpec(arch))
        p = M.classify(clf, X)
        assert p.shape == (4, 3)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)

    def test_parameter_counts(self):
        enc, dec, disc = M.matched_specs("saae", latent_dim=15, class_dim=3)
        assert M.build_encoder(enc).num_parameters() == 125_234
        assert M.build_decoder(dec).num_parameters() == 321_782
        assert M.build_discriminator(disc).num_parameters() == 18 * 64 + 64 + 3 * (64 * 64 + 64) + 65


class TestSpecs:
    def test_saae_needs_classes(self):
        with pytest.raises(SpecError):
            M.EncoderSpec("saae", class_dim=0)

    def test_aae_rejects_classes(self):
        with pytest.raises(SpecError):
            M.DecoderSpec("aae", class_dim=3)

    def test_unknown_variant(self):
        with pytest.raises(SpecError):
            M.EncoderSpec("gan")

    def test_vae_has_no_noise_input(self):
        assert M.EncoderSpec("vae").noise_dim == 0

    def test_discriminator_depth(self):
        with pytest.raises(SpecError):
            M.DiscriminatorSpec(hidden=(64, 64))

    @pytest.mark.parametrize("spec", [M.EncoderSpec("saae", class_dim=3), M.DecoderSpec("vae"),
                                      M.DiscriminatorSpec(4), M.ClassifierSpec("feedforward", num_classes=5)])
    def test_dict_round_trip(self, spec):
        assert type(spec).from_dict(spec.to_dict()) == spec

    def test_unknown_field(self):
        with pytest.raises(SpecError):
            M.EncoderSpec.from_dict({"variant": "aae", "width": 3})

    def test_input_shape_checked(self):
        enc = M.build_encoder(M.EncoderSpec("aae"))
        with pytest.raises(ShapeError):
            M.encode(enc, np.zeros((2, 24, 6)))

    def test_decoder_class_input_checked(self):
        dec = M.build_decoder(M.DecoderSpec("saae", latent_dim=4, class_dim=3))
        with pytest.raises(ShapeError):
            M.decode(dec, np.zeros((2, 4)), np.zeros((2, 2)))


class TestDeterminism:
    def test_same_seed_same_init(self):
        spec = M.EncoderSpec("saae", class_dim=3)
        a, b = M.build_encoder(spec, 5), M.build_encoder(spec, 5)
        assert a.num_parameters() == b.num_parameters()
        for (ka, pa), (kb, pb) in zip(a.parameters().items(), b.parameters().items()):
            assert ka == kb
            np.testing.assert_array_equal(pa.data, pb.data)

    def test_different_seed_differs(self):
        spec = M.EncoderSpec("aae")
        a, b = M.build_encoder(spec, 1), M.build_encoder(spec, 2)
        assert any(not np.array_equal(pa.data, pb.data)
                   for pa, pb in zip(a.parameters().values(), b.parameters().values()) if pa.data.any())

    def test_infer_mode_repeatable(self):
        enc = M.build_encoder(M.EncoderSpec("aae"))
        eta = np.full(4, 0.3)
        np.testing.assert_array_equal(M.encode(enc, X, eta=eta), M.encode(enc, X, eta=eta))

    def test_eta_changes_z(self):
        enc = M.build_encoder(M.EncoderSpec("aae"))
        assert not np.allclose(M.encode(enc, X, eta=np.zeros(4)), M.encode(enc, X, eta=np.ones(4)))

    def test_train_mode_uses_dropout(self):
        enc = M.build_encoder(M.EncoderSpec("aae"))
        a = M.encode(enc, X, eta=np.zeros(4), mode="train")
        b = M.encode(enc, X, eta=np.zeros(4), mode="train")
        assert not np.array_equal(a, b)

    def test_state_round_trip(self):
        enc = M.build_encoder(M.EncoderSpec("aae"), 0)
        M.encode(enc, X, eta=np.zeros(4), mode="train")  # moves running stats
        other = M.build_encoder(M.EncoderSpec("aae"), 9)
        other.load_state(*enc.state())
        np.testing.assert_array_equal(M.encode(enc, X, eta=np.zeros(4)), M.encode(other, X, eta=np.zeros(4)))

    def test_load_state_shape_mismatch(self):
        enc = M.build_encoder(M.EncoderSpec("aae", latent_dim=4))
        params, buffers = M.build_encoder(M.EncoderSpec("aae", latent_dim=5)).state()
        with pytest.raises(ShapeError):
            enc.load_state(params, buffers)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_output_raises(self):
        enc = M.build_encoder(M.EncoderSpec("aae"))
        with pytest.raises(NumericError):
            M.encode(enc, np.full((2, 25, 6), np.inf), eta=np.zeros(2))


def _jitter(*nets):
    # zero-initialized biases put dropped-out positions exactly on the leaky-ReLU kink
    rng = np.random.default_rng(11)
    for net in nets:
        for p in net.parameters().values():
            p.data += rng.normal(0.0, 0.05, p.shape)


def _net_check(net, fn, inputs):
    _jitter(net)
    tensors = dict(net.parameters())
    tensors.update(inputs)
    net.train()

    def wrapped():
        net.set_rng(np.random.default_rng(3))
        return fn()

    return grad_check(wrapped, tensors)


class TestCompositeGradients:
    x = Tensor(np.random.default_rng(4).normal(size=(3, 9, 6)))

    def _probe(self, shape):
        return np.random.default_rng(hash(shape) % 2**32).normal(size=shape)

    @pytest.mark.parametrize("variant,c", [("vae", 0), ("aae", 0), ("saae", 2)])
    def test_encoder(self, variant, c):
        spec, _, _ = small(variant, c)
        enc = M.build_encoder(spec, 1)
        eta = np.random.default_rng(6).normal(size=(3, spec.noise_dim)) if spec.noise_dim else None

        def fn():
            out = enc(self.x, eta)
            parts = out if isinstance(out, tuple) else (out,)
            return sum(((p * self._probe(p.shape)).sum() for p in parts), Tensor(0.0))

        rep = _net_check(enc, fn, {"x": self.x})
        assert rep.max_rel_error < 1e-4, (rep.max_rel_error, rep.worst_name)

    @pytest.mark.parametrize("variant,c", [("aae", 0), ("saae", 2)])
    def test_decoder(self, variant, c):
        _, spec, _ = small(variant, c)
        dec = M.build_decoder(spec, 2)
        z = Tensor(np.random.default_rng(7).normal(size=(3, 3)))
        y = np.eye(c)[[0, 1, 1]] if c else None
        probe = self._probe((3, 9, 6))
        rep = _net_check(dec, lambda: (dec(z, y) * probe).sum(), {"z": z})
        assert rep.max_rel_error < 1e-4, (rep.max_rel_error, rep.worst_name)

    def test_discriminator(self):
        _, _, spec = small("saae", 2)
        disc = M.build_discriminator(spec, 3)
        zy = Tensor(np.random.default_rng(8).normal(size=(4, 5)))
        probe = self._probe((4,))
        rep = _net_check(disc, lambda: (disc(zy) * probe).sum(), {"zy": zy})
        assert rep.max_rel_error < 1e-4

    @pytest.mark.parametrize("arch", ["feedforward", "cnn"])
    def test_classifier(self, arch):
        clf = M.build_classifier(M.ClassifierSpec(arch, n_t=9, filters=(2, 3, 3, 2), hidden=(4, 3), kernel_size=3), 4)
        probe = self._probe((3, 3))
        rep = _net_check(clf, lambda: (clf(self.x) * probe).sum(), {"x": self.x})
        assert rep.max_rel_error < 1e-4

    def test_encoder_decoder_chain(self):
        enc_spec, dec_spec, _ = small("saae", 2)
        enc, dec = M.build_encoder(enc_spec, 5), M.build_decoder(dec_spec, 6)
        eta = np.zeros((3, 1))
        def fn():
            z, logits = enc(self.x, eta)
            diff = dec(z, softmax(logits)) - self.x
            return (diff * diff).mean()

        _jitter(enc, dec)
        tensors = {f"e.{k}": v for k, v in enc.parameters().items()}
        tensors.update({f"d.{k}": v for k, v in dec.parameters().items()})
        enc.train()
        dec.train()

        def wrapped():
            enc.set_rng(np.random.default_rng(1))
            dec.set_rng(np.random.default_rng(2))
            return fn()

        rep = grad_check(wrapped, tensors)
        assert rep.max_rel_error < 1e-4, (rep.max_rel_error, rep.worst_name)
