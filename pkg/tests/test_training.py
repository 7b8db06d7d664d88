"""Training machinery: losses, Adam, stage loops, freezing, evaluation."""
import numpy as np
import pytest

from ivfnet import synth
from ivfnet import tensor as T
from ivfnet import training as tr
from ivfnet.adversarial import GanLossConfig
from ivfnet.checkpoint import component_checksums
from ivfnet.errors import InvalidInputError, NumericError
from ivfnet.features import FeatureConfig


def small_model(variant="index"):
    return tr.ModelConfig(
        image_size=16,
        latent_grid=4,
        embed_dim=8,
        codebook_size=16,
        encoder_channels=(8, 16, 16),
        decoder_channels=(16, 8, 8),
        g_channels=(8, 8, 8, 8),
        critic_hidden=(32, 16),
        classifier_channels=(8, 8, 8, 8, 16, 16, 16, 16),
        variant=variant,
    )


def small_pairs(n=24, seed=7):
    spec = synth.SyntheticSceneSpec(image_size=16, clip_seconds=0.5)
    return synth.gen_synthetic(spec, n, seed=seed, feature_cfg=FeatureConfig())


class TestReconstructionLoss:
    def test_identical_images_give_zero(self):
        img = T.tensor(np.random.default_rng(0).random((2, 1, 4, 4)).astype(np.float32))
        delta = np.ones((1, 4, 4), dtype=np.float32)
        assert float(tr.reconstruction_loss(img, img, delta).data) == 0.0

    def test_unit_offset_unit_variance_gives_one(self):
        a = T.tensor(np.zeros((3, 1, 4, 4), dtype=np.float32))
        b = T.tensor(np.ones((3, 1, 4, 4), dtype=np.float32))
        delta = np.ones((1, 4, 4), dtype=np.float32)
        assert abs(float(tr.reconstruction_loss(a, b, delta).data) - 1.0) < 1e-7

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(1)
        a = rng.random((2, 3, 5, 5))
        b = rng.random((2, 3, 5, 5))
        delta = rng.uniform(0.1, 2.0, (3, 5, 5))
        got = float(
            tr.reconstruction_loss(
                T.tensor(a.astype(np.float32)), T.tensor(b.astype(np.float32)),
                delta.astype(np.float32),
            ).data
        )
        want = np.mean((a.astype(np.float32) - b.astype(np.float32)) ** 2 / delta.astype(np.float32))
        assert abs(got - want) < 1e-6 * max(1.0, abs(want))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            tr.reconstruction_loss(
                T.tensor(np.zeros((1, 1, 4, 4), np.float32)),
                T.tensor(np.zeros((1, 1, 5, 5), np.float32)),
                np.ones((1, 4, 4), np.float32),
            )

    def test_delta_floor_keeps_constant_datasets_finite(self):
        images = np.full((10, 1, 4, 4), 0.5, dtype=np.float32)
        delta = tr.image_statistics(images)
        assert np.all(delta == tr.DELTA_I_FLOOR)
        loss = tr.reconstruction_loss(
            T.tensor(images[:2]), T.tensor(images[:2] + 0.1), delta
        )
        assert np.isfinite(float(loss.data))


class TestAdam:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        p = T.parameter(np.array([1.0, -2.0], dtype=np.float32))
        opt = tr.Adam([("p", p)], lr=0.1)
        opt.step([T.tensor(np.zeros(2, dtype=np.float32))])
        np.testing.assert_array_equal(p.data, [1.0, -2.0])
        assert opt.t == 1

    def test_single_step_hand_formula(self):
        lr, b1, b2, eps = 0.01, 0.5, 0.999, 1e-8
        p = T.parameter(np.array([3.0], dtype=np.float32))
        opt = tr.Adam([("p", p)], lr=lr, b1=b1, b2=b2, eps=eps)
        opt.step([T.tensor(np.array([1.0], dtype=np.float32))])
        m = (1 - b1) * 1.0
        v = (1 - b2) * 1.0
        m_hat = m / (1 - b1)
        v_hat = v / (1 - b2)
        want = 3.0 - lr * m_hat / (np.sqrt(v_hat) + eps)
        assert abs(float(p.data[0]) - want) < 1e-6
        # the bias-corrected first step moves by about the learning rate
        assert abs((3.0 - float(p.data[0])) - lr) < 1e-5

    def test_identical_runs_are_bit_identical(self):
        def run():
            rng = np.random.default_rng(3)
            p = T.parameter(rng.standard_normal(5).astype(np.float32))
            opt = tr.Adam([("p", p)], lr=0.01)
            for _ in range(20):
                g = rng.standard_normal(5).astype(np.float32)
                opt.step([T.tensor(g)])
            return p.data.tobytes()

        assert run() == run()


class TestStageA:
    def test_short_run_is_finite_and_deterministic(self):
        pairs = small_pairs()
        tc = tr.TrainConfig(steps_a=6, batch_size=8, seed=11, checkpoint_every=0)
        gc = GanLossConfig(critic_steps=2)
        b1 = tr.train_stage_a(pairs, small_model(), tc, gc)
        b2 = tr.train_stage_a(pairs, small_model(), tc, gc)
        for (n1, p1), (n2, p2) in zip(b1.named_params(), b2.named_params()):
            assert n1 == n2
            assert p1.data.tobytes() == p2.data.tobytes(), n1

    def test_novq_never_touches_codebook(self):
        pairs = small_pairs()
        tc = tr.TrainConfig(steps_a=5, batch_size=8, seed=3, checkpoint_every=0)
        bundle = tr.train_stage_a(pairs, small_model("novq"), tc, GanLossConfig(critic_steps=1))
        fresh = tr.build_bundle(small_model("novq"), bundle.feature_shape, tc.seed)
        assert (
            bundle.codebook.prototypes.data.tobytes()
            == fresh.codebook.prototypes.data.tobytes()
        )

    def test_quantized_variant_runs(self):
        pairs = small_pairs(16)
        tc = tr.TrainConfig(steps_a=3, batch_size=8, seed=5, checkpoint_every=0)
        bundle = tr.train_stage_a(
            pairs, small_model("quantized"), tc, GanLossConfig(critic_steps=1)
        )
        assert bundle.step_a == 3

    def test_loss_csv_columns(self, tmp_path):
        pairs = small_pairs(16)
        tc = tr.TrainConfig(steps_a=3, batch_size=8, seed=5, checkpoint_every=0)
        csv_path = tmp_path / "loss.csv"
        tr.train_stage_a(pairs, small_model(), tc, GanLossConfig(critic_steps=1),
                         loss_csv=csv_path)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "step,L_E_recon,L_E_codebook,L_E_commit,L_D,L_G_adv,wall_ms"
        assert len(lines) == 4

    def test_nan_abort_names_the_term(self):
        pairs = small_pairs(16)
        tc = tr.TrainConfig(steps_a=3, batch_size=8, seed=5, checkpoint_every=0,
                            learning_rate=1e9)  # force a blow-up
        with pytest.raises(NumericError, match="L_"):
            tr.train_stage_a(pairs, small_model(), tc, GanLossConfig(critic_steps=1))


@pytest.fixture(scope="module")
def stage_a_bundle():
    pairs = small_pairs(24)
    tc = tr.TrainConfig(steps_a=4, batch_size=8, seed=2, checkpoint_every=0)
    bundle = tr.train_stage_a(pairs, small_model(), tc, GanLossConfig(critic_steps=1))
    return bundle, pairs


class TestStageB:
    def test_freeze_contract_bitwise(self, stage_a_bundle):
        bundle, pairs = stage_a_bundle
        before = component_checksums(
            {name: p.data for name, p in bundle.stage_a_named_params()}
        )
        tc = tr.TrainConfig(steps_b=8, batch_size=8, seed=2)
        tr.train_stage_b(pairs, bundle, tc)
        after = component_checksums(
            {name: p.data for name, p in bundle.stage_a_named_params()}
        )
        assert before == after

    def test_memorization_reaches_perfect_accuracy(self, stage_a_bundle):
        bundle, pairs = stage_a_bundle
        subset = pairs[:8]
        tc = tr.TrainConfig(steps_b=300, batch_size=8, seed=2,
                            classifier_learning_rate=3e-3)
        tr.train_stage_b(subset, bundle, tc)
        result = tr.evaluate(bundle, subset, "train")
        assert result.accuracy == 1.0
        assert np.all(result.confusion == np.diag(np.diag(result.confusion)))

    def test_missing_frozen_components_rejected(self, tmp_path):
        bundle = tr.build_bundle(small_model(), (14, 64), seed=0)
        bundle.delta_i = np.ones((3, 16, 16), dtype=np.float32)
        bundle.audio_mean = np.zeros(64, dtype=np.float32)
        bundle.audio_std = np.ones(64, dtype=np.float32)
        path = tmp_path / "a.ckpt"
        tr.save_bundle(path, bundle, [], tr.TrainConfig(), None)
        from ivfnet.checkpoint import load_checkpoint, save_checkpoint

        components, meta = load_checkpoint(path)
        dropped = {k: v for k, v in components.items() if not k.startswith("codebook")}
        save_checkpoint(path, dropped, meta)
        from ivfnet.errors import CheckpointError

        with pytest.raises(CheckpointError):
            tr.load_bundle(path)


class TestEvaluate:
    def test_uniform_random_predictor_sits_at_chance(self):
        """A label-agnostic predictor on 10 classes lands within the binomial
        envelope around 0.1 over 1000 samples."""
        rng = np.random.default_rng(4)
        labels = np.arange(1000) % 10
        preds = rng.integers(0, 10, 1000)
        acc = float(np.mean(preds == labels))
        assert abs(acc - 0.1) <= 0.03

    def test_empty_split_rejected(self):
        bundle = tr.build_bundle(small_model(), (14, 64), seed=0)
        with pytest.raises(InvalidInputError, match="empty"):
            tr.evaluate(bundle, [], "seen")


class TestCheckpointRoundTrip:
    def test_save_load_preserves_everything(self, tmp_path):
        pairs = small_pairs(16)
        tc = tr.TrainConfig(steps_a=3, batch_size=8, seed=9, checkpoint_every=0)
        bundle = tr.train_stage_a(pairs, small_model(), tc, GanLossConfig(critic_steps=1),
                                  ckpt_path=tmp_path / "a.ckpt")
        loaded, meta = tr.load_bundle(tmp_path / "a.ckpt")
        assert meta["step_a"] == 3
        for (n1, p1), (n2, p2) in zip(bundle.named_params(), loaded.named_params()):
            assert n1 == n2 and p1.data.tobytes() == p2.data.tobytes()
        np.testing.assert_array_equal(loaded.delta_i, bundle.delta_i)
        np.testing.assert_array_equal(loaded.audio_mean, bundle.audio_mean)

    def test_loaded_bundle_predicts_identically(self, tmp_path):
        pairs = small_pairs(16)
        tc = tr.TrainConfig(steps_a=2, steps_b=10, batch_size=8, seed=9,
                            checkpoint_every=0)
        bundle = tr.train_stage_a(pairs, small_model(), tc, GanLossConfig(critic_steps=1))
        tr.train_stage_b(pairs, bundle, tc, ckpt_path=tmp_path / "b.ckpt")
        loaded, _ = tr.load_bundle(tmp_path / "b.ckpt")
        feats = np.stack([p.audio.data for p in pairs]).astype(np.float32)
        np.testing.assert_array_equal(tr.predict(bundle, feats), tr.predict(loaded, feats))


class TestPresets:
    def test_named_presets(self):
        tc = tr.apply_preset(tr.TrainConfig(), "paper-s33")
        assert tc.learning_rate == 0.001 and tc.batch_size == 16 and tc.epochs == 9000
        tc = tr.apply_preset(tr.TrainConfig(), "paper-s41")
        assert tc.learning_rate == 0.0002 and tc.batch_size == 640 and tc.epochs == 5000
        assert tc.adam_beta1 == 0.5 and tc.adam_beta2 == 0.999
        with pytest.raises(InvalidInputError):
            tr.apply_preset(tr.TrainConfig(), "paper-s99")
