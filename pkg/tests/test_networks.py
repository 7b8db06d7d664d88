"""Architecture contracts: shapes, determinism, gradients, structure."""
import numpy as np
import pytest

from helpers import check_grads_fd

from ivfnet import networks as N
from ivfnet import tensor as T
from ivfnet.errors import InvalidInputError
from ivfnet.vq import Codebook


def tiny_encoder(rng=None, size=8, grid=4, d=4):
    rng = rng or np.random.default_rng(0)
    return N.Encoder(
        N.EncoderConfig(size, 1, (4, 4, 4), grid, d), rng
    )


class TestEncoderDecoder:
    def test_encode_shape_and_determinism(self):
        rng = np.random.default_rng(1)
        enc = N.Encoder(N.EncoderConfig(), np.random.default_rng(7))
        img = rng.standard_normal((2, 3, 32, 32)).astype(np.float32)
        a = enc.encode(T.tensor(img)).data
        b = enc.encode(T.tensor(img)).data
        assert a.shape == (2, 64, 16)
        assert a.tobytes() == b.tobytes()
        enc2 = N.Encoder(N.EncoderConfig(), np.random.default_rng(7))
        c = enc2.encode(T.tensor(img)).data
        assert a.tobytes() == c.tobytes()

    def test_zero_image_zero_final_layer_gives_zero_embedding(self):
        enc = tiny_encoder()
        enc.layers[-1].w.data = np.zeros_like(enc.layers[-1].w.data)
        out = enc.encode(T.tensor(np.zeros((1, 1, 8, 8), dtype=np.float32)))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_encoder_gradient_matches_fd(self):
        rng = np.random.default_rng(2)
        img = rng.standard_normal((1, 1, 8, 8))

        def loss(img_t):
            enc = tiny_encoder(np.random.default_rng(3))
            out = enc.encode(img_t)
            return T.sum(T.mul(out, out))

        check_grads_fd(loss, [img], rng, rtol=1e-3)

    def test_decoder_roundtrip_shapes_and_gradient(self):
        rng = np.random.default_rng(4)
        dec = N.Decoder(N.DecoderConfig(8, 1, (4, 4, 4), 4, 4), np.random.default_rng(5))
        vecs = rng.standard_normal((2, 16, 4))
        out = dec.decode(T.tensor(vecs.astype(np.float32)))
        assert out.shape == (2, 1, 8, 8)

        def loss(v):
            d = N.Decoder(N.DecoderConfig(8, 1, (4, 4, 4), 4, 4), np.random.default_rng(5))
            img = d.decode(v)
            return T.sum(T.mul(img, img))

        check_grads_fd(loss, [vecs], rng, rtol=1e-3)

    def test_shape_validation(self):
        enc = tiny_encoder()
        with pytest.raises(InvalidInputError, match="encoder expects"):
            enc.encode(T.tensor(np.zeros((1, 1, 6, 6), dtype=np.float32)))
        with pytest.raises(InvalidInputError, match="does not divide"):
            N.EncoderConfig(image_size=24, latent_grid=7)
        with pytest.raises(InvalidInputError, match="not a power-of-two"):
            N.EncoderConfig(image_size=18, latent_grid=6)


class TestTransformNet:
    def make(self, variant, rng_seed=6):
        cfg = N.TransformConfig(variant, (12, 16), 16, 8, 4)
        return N.TransformNet(cfg, np.random.default_rng(rng_seed)), cfg

    def test_index_variant_rows_are_distributions(self):
        net, cfg = self.make("index")
        rng = np.random.default_rng(7)
        feats = rng.standard_normal((3, 1, 12, 16)).astype(np.float32)
        probs = net.transform(T.tensor(feats)).data
        assert probs.shape == (3, 16, 8)
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-6)

    def test_vector_variants_shape(self):
        for variant in ("quantized", "novq"):
            net, cfg = self.make(variant)
            feats = np.zeros((2, 1, 12, 16), dtype=np.float32)
            out = net.transform(T.tensor(feats))
            assert out.shape == (2, 16, 4)

    def test_one_hot_probability_rows_pick_the_prototype_exactly(self):
        rng = np.random.default_rng(8)
        cb = Codebook.init_random(8, 4, rng)
        probs = np.zeros((1, 16, 8), dtype=np.float32)
        probs[:, :, 3] = 1.0
        mixed = N.expected_prototypes(T.tensor(probs), cb)
        want = np.tile(cb.prototypes.data[3], (1, 16, 1))
        np.testing.assert_array_equal(mixed.data, want)

    def test_uniform_probabilities_give_prototype_mean(self):
        rng = np.random.default_rng(9)
        cb = Codebook.init_random(4, 4, rng)
        probs = np.full((1, 2, 4), 0.25, dtype=np.float32)
        mixed = N.expected_prototypes(T.tensor(probs), cb)
        want = cb.prototypes.data.mean(axis=0)
        np.testing.assert_allclose(mixed.data[0, 0], want, rtol=1e-6)

    def test_argmax_invariant_to_constant_logit_shift(self):
        net, _ = self.make("index")
        rng = np.random.default_rng(10)
        feats = rng.standard_normal((2, 1, 12, 16)).astype(np.float32)
        probs = net.transform(T.tensor(feats)).data
        # shifting all logits at a position by a constant rescales every
        # probability by the same factor
        head_b = net.head.b.data.reshape(16, 8)
        net.head.b.data = (head_b + 3.5).reshape(-1)
        shifted = net.transform(T.tensor(feats)).data
        np.testing.assert_array_equal(
            np.argmax(probs, axis=-1), np.argmax(shifted, axis=-1)
        )

    def test_unknown_variant_rejected(self):
        with pytest.raises(InvalidInputError, match="variant"):
            N.TransformConfig("soft", (12, 16), 16, 8, 4)

    def test_imagined_features_inference_paths(self):
        rng = np.random.default_rng(11)
        cb = Codebook.init_random(8, 4, rng)
        feats = rng.standard_normal((3, 1, 12, 16)).astype(np.float32)

        net, _ = self.make("index")
        idx, vecs = N.imagined_features(net, cb, T.tensor(feats))
        assert idx.shape == (3, 16)
        np.testing.assert_array_equal(vecs, cb.prototypes.data[idx])

        net, _ = self.make("quantized")
        idx, vecs = N.imagined_features(net, cb, T.tensor(feats))
        np.testing.assert_array_equal(vecs, cb.prototypes.data[idx])

        net, _ = self.make("novq")
        idx, vecs = N.imagined_features(net, None, T.tensor(feats))
        assert idx is None
        assert vecs.shape == (3, 16, 4)


class TestCritic:
    def test_score_shape_and_smooth_ops_only(self):
        rng = np.random.default_rng(12)
        critic = N.Critic(N.DiscriminatorConfig(20, (8, 8), "tanh"), rng)
        x = T.parameter(rng.standard_normal((4, 20)).astype(np.float32))
        s = critic.score(x)
        assert s.shape == (4,)
        # double differentiation works end to end
        (gx,) = T.grad(T.sum(s), [x])
        grads = T.grad(T.l2_norm(gx), [p for _, p in critic.named_params()])
        assert all(np.all(np.isfinite(g.data)) for g in grads)

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((2, 10))

        def loss(xt):
            critic = N.Critic(N.DiscriminatorConfig(10, (6,), "tanh"),
                              np.random.default_rng(14))
            return T.sum(critic.score(xt))

        check_grads_fd(loss, [x], rng, rtol=1e-3)

    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            N.DiscriminatorConfig(10, (8,), "relu")
        with pytest.raises(InvalidInputError):
            N.DiscriminatorConfig(10, (), "tanh")


class TestSceneClassifier:
    def make(self, n_classes=3, grid=8, d=4):
        cfg = N.ClassifierConfig(d, grid, n_classes, (4, 4, 8, 8, 8, 8, 8, 8))
        return N.SceneClassifier(cfg, np.random.default_rng(15))

    def test_structure_counts(self):
        clf = self.make()
        assert len(clf.convs) == 8 == clf.N_CONV
        assert clf.N_MEAN_POOL == 4
        assert clf.N_MAX_POOL == 1
        with pytest.raises(InvalidInputError, match="8 conv"):
            N.ClassifierConfig(4, 8, 3, (4, 4))

    def test_probabilities_normalize(self):
        clf = self.make(n_classes=10)
        rng = np.random.default_rng(16)
        grid = T.tensor(rng.standard_normal((5, 4, 8, 8)).astype(np.float32))
        probs = clf.classify(grid).data
        assert probs.shape == (5, 10)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_cross_entropy_gradient_matches_fd(self):
        rng = np.random.default_rng(17)
        grid = rng.standard_normal((2, 4, 4, 4))
        labels = np.array([0, 2])

        def loss(gt):
            clf = N.SceneClassifier(
                N.ClassifierConfig(4, 4, 3, (4, 4, 4, 4, 8, 8, 8, 8)),
                np.random.default_rng(18),
            )
            return T.cross_entropy_with_logits(clf.logits(gt), labels)

        check_grads_fd(loss, [grid], rng, rtol=1e-3)

    def test_grid_tensor_layout(self):
        vecs = np.arange(2 * 4 * 3, dtype=np.float32).reshape(2, 4, 3)
        grid = N.grid_tensor(vecs, 2, 3)
        assert grid.shape == (2, 3, 2, 2)
        # position (row r, col c) of the latent grid holds vector r*2+c
        np.testing.assert_array_equal(grid.data[0, :, 1, 0], vecs[0, 2])
