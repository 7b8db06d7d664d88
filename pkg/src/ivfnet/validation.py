"""Input validation helpers for the estimator layer."""
from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .features import FeatureMatrix, Waveform
from .synth import AvPair


def as_waveform_list(X, sample_rate: int) -> list[Waveform]:
    """Accept a (n, samples) array, a list of 1-D arrays, or a list of
    Waveforms; everything else is rejected."""
    if isinstance(X, np.ndarray):
        if X.ndim != 2:
            raise InvalidInputError(
                f"waveform array must be (n_clips, n_samples), got {X.shape}"
            )
        return [Waveform(row, sample_rate) for row in X]
    out = []
    for i, item in enumerate(X):
        if isinstance(item, Waveform):
            out.append(item)
            continue
        arr = np.asarray(item, dtype=np.float64)
        if arr.ndim != 1 or len(arr) == 0:
            raise InvalidInputError(f"clip {i}: expected a non-empty 1-D array")
        out.append(Waveform(arr, sample_rate))
    if not out:
        raise InvalidInputError("no clips given")
    return out


def as_feature_array(X) -> np.ndarray:
    """Accept (n, T, F) arrays, lists of (T, F) arrays, or lists of
    FeatureMatrix with a common shape; returns float32 (n, T, F)."""
    if isinstance(X, np.ndarray):
        if X.ndim == 2:
            X = X[None]
        if X.ndim != 3:
            raise InvalidInputError(f"features must be (n, T, F), got {X.shape}")
        return X.astype(np.float32)
    mats = []
    for i, item in enumerate(X):
        data = item.data if isinstance(item, FeatureMatrix) else np.asarray(item)
        if data.ndim != 2:
            raise InvalidInputError(f"clip {i}: feature matrix must be 2-D")
        mats.append(data)
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise InvalidInputError(
            f"feature matrices must share one shape, got {sorted(shapes)}"
        )
    return np.stack(mats).astype(np.float32)


def as_paired_arrays(X):
    """Accept a list of AvPair or an (images, features) tuple; returns
    (images (n, C, S, S) float32, features (n, T, F) float32)."""
    if isinstance(X, tuple) and len(X) == 2:
        images = np.asarray(X[0], dtype=np.float32)
        feats = as_feature_array(X[1])
    else:
        pairs = list(X)
        if not pairs or not isinstance(pairs[0], AvPair):
            raise InvalidInputError(
                "expected (images, features) arrays or a list of AvPair"
            )
        if any(p.image is None for p in pairs):
            raise InvalidInputError("paired fitting needs images on every AvPair")
        images = np.stack([p.image for p in pairs]).astype(np.float32)
        feats = as_feature_array([p.audio for p in pairs])
    if images.ndim != 4:
        raise InvalidInputError(f"images must be (n, C, S, S), got {images.shape}")
    if len(images) != len(feats):
        raise InvalidInputError(
            f"{len(images)} images vs {len(feats)} feature matrices"
        )
    return images, feats


def as_label_array(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise InvalidInputError(f"labels must be ({n},), got {y.shape}")
    return y
