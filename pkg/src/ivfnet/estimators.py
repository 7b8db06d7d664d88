"""Scikit-learn style wrappers around the pipeline.

SpectralFeaturizer turns raw waveforms into feature matrices;
IvfTransformer fits the paired stage and maps audio features to flattened
imagined visual features (a plain 2-D matrix, so any scikit-learn classifier
can sit downstream); IvfSceneClassifier is the pipeline's own conv classifier
with the usual fit/predict/predict_proba surface. All three follow the
get_params/set_params/clone conventions.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from . import tensor as T
from . import training
from .adversarial import GanLossConfig
from .errors import InvalidInputError
from .features import FEATURE_RECIPES, FeatureConfig, extract
from .networks import ClassifierConfig, SceneClassifier, grid_tensor
from .synth import AvPair
from .validation import (
    as_feature_array,
    as_label_array,
    as_paired_arrays,
    as_waveform_list,
)


class SpectralFeaturizer(BaseEstimator, TransformerMixin):
    """Waveforms to spectral feature matrices (one of the named recipes)."""

    def __init__(self, recipe="log-mel", sample_rate=16000, fft_size=1024,
                 hop_size=512, window="hann", n_mels=64, f_min=0.0, f_max=8000.0,
                 log_floor=1e-10, delta_window=2, n_mfcc=13):
        self.recipe = recipe
        self.sample_rate = sample_rate
        self.fft_size = fft_size
        self.hop_size = hop_size
        self.window = window
        self.n_mels = n_mels
        self.f_min = f_min
        self.f_max = f_max
        self.log_floor = log_floor
        self.delta_window = delta_window
        self.n_mfcc = n_mfcc

    def _feature_config(self) -> FeatureConfig:
        if self.recipe not in FEATURE_RECIPES:
            raise InvalidInputError(
                f"unknown recipe {self.recipe!r}; expected one of {FEATURE_RECIPES}"
            )
        return FeatureConfig(
            sample_rate=self.sample_rate, fft_size=self.fft_size,
            hop_size=self.hop_size, window=self.window, n_mels=self.n_mels,
            f_min=self.f_min, f_max=self.f_max, log_floor=self.log_floor,
            delta_window=self.delta_window, n_mfcc=self.n_mfcc,
        )

    def fit(self, X, y=None):
        self._feature_config()  # validate parameters
        return self

    def transform(self, X):
        """X: (n, samples) array or list of 1-D arrays/Waveforms. Returns an
        (n, T, F) array when shapes agree, else a list of (T, F) arrays."""
        cfg = self._feature_config()
        waves = as_waveform_list(X, self.sample_rate)
        mats = [extract(w, self.recipe, cfg).data.astype(np.float32) for w in waves]
        if len({m.shape for m in mats}) == 1:
            return np.stack(mats)
        return mats


class IvfTransformer(BaseEstimator, TransformerMixin):
    """Stage A as a transformer: fit on audio-visual pairs, then map audio
    feature matrices to flattened imagined visual features."""

    def __init__(self, variant="index", image_size=32, image_channels=3,
                 latent_grid=8, embed_dim=16, codebook_size=64,
                 commitment_beta=0.25, lambda_gp=10.0, critic_steps=5,
                 steps=500, batch_size=16, learning_rate=3e-4, seed=0):
        self.variant = variant
        self.image_size = image_size
        self.image_channels = image_channels
        self.latent_grid = latent_grid
        self.embed_dim = embed_dim
        self.codebook_size = codebook_size
        self.commitment_beta = commitment_beta
        self.lambda_gp = lambda_gp
        self.critic_steps = critic_steps
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed

    def fit(self, X, y=None):
        """X: list of AvPair (image + audio features) or a tuple of
        (images (n, C, S, S), features (n, T, F))."""
        images, feats = as_paired_arrays(X)
        mc = training.ModelConfig(
            image_size=self.image_size, image_channels=self.image_channels,
            latent_grid=self.latent_grid, embed_dim=self.embed_dim,
            codebook_size=self.codebook_size, commitment_beta=self.commitment_beta,
            variant=self.variant,
        )
        tc = training.TrainConfig(
            learning_rate=self.learning_rate, batch_size=self.batch_size,
            seed=self.seed, steps_a=self.steps, checkpoint_every=0,
        )
        gc = GanLossConfig(lambda_gp=self.lambda_gp, critic_steps=self.critic_steps)
        pairs = [
            AvPair(image=img, audio=_matrixlike(f), label=None)
            for img, f in zip(images, feats)
        ]
        self.bundle_ = training.train_stage_a(pairs, mc, tc, gc)
        return self

    def transform(self, X) -> np.ndarray:
        """X: (n, T, F) features, list of FeatureMatrix, or list of AvPair.
        Returns (n, latent_positions * embed_dim) float32."""
        if not hasattr(self, "bundle_"):
            raise InvalidInputError("IvfTransformer is not fitted yet")
        if _is_pair_list(X):
            feats = as_feature_array([p.audio for p in X])
        else:
            feats = as_feature_array(X)
        vecs = training.imagined_vectors(self.bundle_, feats)
        return vecs.reshape(len(vecs), -1).astype(np.float32)


def _is_pair_list(X) -> bool:
    return not isinstance(X, (np.ndarray, tuple)) and bool(list(X)) and isinstance(list(X)[0], AvPair)


def _matrixlike(data):
    from .features import FeatureKind, FeatureMatrix

    return FeatureMatrix(np.asarray(data, dtype=np.float64), FeatureKind.LOG_MEL, 0.0)


class IvfSceneClassifier(BaseEstimator, ClassifierMixin):
    """The eight-conv scene classifier over flattened latent feature grids."""

    def __init__(self, latent_grid=8, embed_dim=16, steps=2000, batch_size=16,
                 learning_rate=1e-3, seed=0):
        self.latent_grid = latent_grid
        self.embed_dim = embed_dim
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed

    def _as_grids(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float32)
        want = self.latent_grid**2 * self.embed_dim
        if X.ndim != 2 or X.shape[1] != want:
            raise InvalidInputError(
                f"expected (n, {want}) flattened feature grids, got {X.shape}"
            )
        return X.reshape(len(X), self.latent_grid**2, self.embed_dim)

    def fit(self, X, y):
        vecs = self._as_grids(X)
        y = as_label_array(y, len(vecs))
        self.classes_, encoded = np.unique(y, return_inverse=True)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x657374]))
        net = SceneClassifier(
            ClassifierConfig(self.embed_dim, self.latent_grid, len(self.classes_)),
            rng,
        )
        opt = training.Adam(net.named_params(), lr=self.learning_rate)
        params = [p for _, p in opt.named]
        data_rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x646174]))
        for _ in range(self.steps):
            batch = data_rng.integers(0, len(vecs), self.batch_size)
            grid = grid_tensor(vecs[batch], self.latent_grid, self.embed_dim)
            loss = T.cross_entropy_with_logits(net.logits(grid), encoded[batch])
            opt.step(T.grad(loss, params))
        self.net_ = net
        return self

    def predict_proba(self, X) -> np.ndarray:
        if not hasattr(self, "net_"):
            raise InvalidInputError("IvfSceneClassifier is not fitted yet")
        vecs = self._as_grids(X)
        out = []
        for lo in range(0, len(vecs), 64):
            grid = grid_tensor(vecs[lo : lo + 64], self.latent_grid, self.embed_dim)
            out.append(self.net_.classify(grid).data)
        return np.concatenate(out, axis=0)

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
