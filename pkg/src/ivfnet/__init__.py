"""Acoustic scene classification via imagined visual features.

The pipeline: a log-mel front end, an image autoencoder discretized by a
shared prototype codebook, a transformation network trained adversarially to
map audio features onto the codebook ("imagined visual features"), and a
convolutional scene classifier trained on those features.
"""
from . import adversarial, checkpoint, config, features, io, networks, synth, tensor, training, vq
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    InvalidInputError,
    NumericError,
    SecondOrderUnsupportedError,
)
from .estimators import IvfSceneClassifier, IvfTransformer, SpectralFeaturizer

__version__ = "0.1.0"

__all__ = [
    "adversarial",
    "checkpoint",
    "config",
    "features",
    "io",
    "networks",
    "synth",
    "tensor",
    "training",
    "vq",
    "SpectralFeaturizer",
    "IvfTransformer",
    "IvfSceneClassifier",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "InvalidInputError",
    "NumericError",
    "SecondOrderUnsupportedError",
    "__version__",
]
