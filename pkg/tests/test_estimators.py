"""Estimator facade: parameter plumbing, shapes, and a composed pipeline."""
import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import Pipeline

from ivfnet import synth
from ivfnet.errors import InvalidInputError
from ivfnet.estimators import IvfSceneClassifier, IvfTransformer, SpectralFeaturizer
from ivfnet.features import FeatureConfig


def toy_pairs(n=24, seed=7):
    spec = synth.SyntheticSceneSpec(image_size=16, clip_seconds=0.5)
    return synth.gen_synthetic(spec, n, seed=seed, feature_cfg=FeatureConfig())


SMALL = dict(image_size=16, latent_grid=4, embed_dim=8, codebook_size=16,
             steps=6, batch_size=8, critic_steps=2, seed=7)


class TestSklearnConventions:
    def test_get_params_set_params_clone(self):
        est = SpectralFeaturizer(recipe="mfcc", n_mfcc=20)
        params = est.get_params()
        assert params["recipe"] == "mfcc" and params["n_mfcc"] == 20
        est2 = clone(est)
        assert est2.get_params() == params
        est2.set_params(n_mels=48)
        assert est2.n_mels == 48

        tr = IvfTransformer(**SMALL)
        assert clone(tr).get_params() == tr.get_params()
        clf = IvfSceneClassifier(latent_grid=4, embed_dim=8)
        assert clone(clf).get_params() == clf.get_params()


class TestSpectralFeaturizer:
    def test_transform_array_input(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(-0.5, 0.5, (3, 16000))
        out = SpectralFeaturizer().fit(X).transform(X)
        assert out.shape == (3, 1 + (16000 - 1024) // 512, 64)

    def test_transform_list_input_and_recipes(self):
        rng = np.random.default_rng(1)
        X = [rng.uniform(-0.5, 0.5, 8000) for _ in range(2)]
        out = SpectralFeaturizer(recipe="mfcc").transform(X)
        assert out.shape[2] == 13
        out = SpectralFeaturizer(recipe="log-mel+delta").transform(X)
        assert out.shape[2] == 128

    def test_bad_recipe_rejected_at_fit(self):
        with pytest.raises(InvalidInputError):
            SpectralFeaturizer(recipe="cqt").fit(np.zeros((1, 4000)))


class TestIvfTransformer:
    def test_fit_transform_shapes(self):
        pairs = toy_pairs()
        tr = IvfTransformer(**SMALL).fit(pairs)
        out = tr.transform(pairs)
        assert out.shape == (len(pairs), 4 * 4 * 8)
        assert out.dtype == np.float32

    def test_accepts_array_tuple(self):
        pairs = toy_pairs(16)
        images = np.stack([p.image for p in pairs])
        feats = np.stack([p.audio.data for p in pairs]).astype(np.float32)
        tr = IvfTransformer(**SMALL).fit((images, feats))
        out = tr.transform(feats)
        assert out.shape == (16, 128)

    def test_transform_before_fit_rejected(self):
        with pytest.raises(InvalidInputError, match="not fitted"):
            IvfTransformer(**SMALL).transform(np.zeros((2, 14, 64), np.float32))


class TestPipelineComposition:
    def test_transformer_plus_classifier_pipeline(self):
        pairs = toy_pairs(24)
        y = np.array([p.label for p in pairs])
        pipe = Pipeline([
            ("ivf", IvfTransformer(**SMALL)),
            ("clf", IvfSceneClassifier(latent_grid=4, embed_dim=8, steps=60,
                                       batch_size=8, seed=7)),
        ])
        pipe.fit(pairs, y)
        preds = pipe.predict(pairs)
        assert preds.shape == (24,)
        assert set(preds) <= set(y.tolist())
        proba = pipe.predict_proba(pairs)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-5)

    def test_classifier_maps_arbitrary_label_values(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((20, 4 * 4 * 8)).astype(np.float32)
        y = np.array(([10, 20] * 10))
        clf = IvfSceneClassifier(latent_grid=4, embed_dim=8, steps=40, seed=0)
        clf.fit(X, y)
        np.testing.assert_array_equal(clf.classes_, [10, 20])
        assert set(clf.predict(X)) <= {10, 20}
