"""Network architectures: image encoder/decoder, the audio-to-visual
transformation network with its three ablation variants, the critic that
scores feature realism, and the scene classifier.

Parameters are float32 engine tensors created from a caller-supplied RNG, so
construction is deterministic given a seed. Every network exposes
named_params() with stable names used by the checkpoint format.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import InvalidInputError
from .tensor import Tensor
from .vq import Codebook, quantize

VARIANTS = ("index", "quantized", "novq")


def _he_conv(rng, cout, cin, k):
    scale = math.sqrt(2.0 / (cin * k * k))
    return (rng.standard_normal((cout, cin, k, k)) * scale).astype(np.float32)


def _glorot_dense(rng, fan_in, fan_out):
    scale = math.sqrt(2.0 / (fan_in + fan_out))
    return (rng.standard_normal((fan_in, fan_out)) * scale).astype(np.float32)


class ConvLayer:
    def __init__(self, rng, cin, cout, stride=1, k=3):
        self.stride = stride
        self.w = T.parameter(_he_conv(rng, cout, cin, k))
        self.b = T.parameter(np.zeros(cout, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        out = T.conv2d(x, self.w, stride=self.stride, padding="same")
        return T.add(out, T.reshape(self.b, (1, -1, 1, 1)))

    def named_params(self, prefix):
        return [(f"{prefix}/w", self.w), (f"{prefix}/b", self.b)]


class DenseLayer:
    def __init__(self, rng, fan_in, fan_out):
        self.w = T.parameter(_glorot_dense(rng, fan_in, fan_out))
        self.b = T.parameter(np.zeros(fan_out, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(T.matmul(x, self.w), T.reshape(self.b, (1, -1)))

    def named_params(self, prefix):
        return [(f"{prefix}/w", self.w), (f"{prefix}/b", self.b)]


def _n_halvings(outer: int, inner: int, what: str) -> int:
    if outer % inner != 0:
        raise InvalidInputError(f"{what}: {inner} does not divide {outer}")
    ratio = outer // inner
    n = ratio.bit_length() - 1
    if 2**n != ratio:
        raise InvalidInputError(
            f"{what}: {outer} -> {inner} is not a power-of-two reduction"
        )
    return n


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 32
    in_channels: int = 3
    channels: tuple[int, int, int] = (32, 64, 64)
    latent_grid: int = 8
    embed_dim: int = 16

    def __post_init__(self):
        n = _n_halvings(self.image_size, self.latent_grid, "encoder")
        if n > 3:
            raise InvalidInputError(
                f"encoder: cannot reduce {self.image_size} to {self.latent_grid} "
                f"within its three hidden conv layers"
            )

    @property
    def n_positions(self) -> int:
        return self.latent_grid**2


@dataclass(frozen=True)
class DecoderConfig:
    image_size: int = 32
    out_channels: int = 3
    channels: tuple[int, int, int] = (64, 64, 32)
    latent_grid: int = 8
    embed_dim: int = 16

    def __post_init__(self):
        n = _n_halvings(self.image_size, self.latent_grid, "decoder")
        if n > 3:
            raise InvalidInputError(
                f"decoder: cannot grow {self.latent_grid} to {self.image_size} "
                f"within its three hidden conv layers"
            )


class Encoder:
    """Maps a (B, C, S, S) image batch to a (B, L, d) grid of embeddings."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        n_down = _n_halvings(cfg.image_size, cfg.latent_grid, "encoder")
        chans = [cfg.in_channels, *cfg.channels, cfg.embed_dim]
        self.layers = [
            ConvLayer(rng, chans[i], chans[i + 1], stride=2 if i < n_down else 1)
            for i in range(4)
        ]

    def encode(self, images: Tensor) -> Tensor:
        cfg = self.cfg
        if images.ndim != 4 or images.shape[1:] != (
            cfg.in_channels,
            cfg.image_size,
            cfg.image_size,
        ):
            raise InvalidInputError(
                f"encoder expects (B, {cfg.in_channels}, {cfg.image_size}, "
                f"{cfg.image_size}), got {images.shape}"
            )
        h = images
        for layer in self.layers[:-1]:
            h = T.leaky_relu(layer(h), 0.2)
        h = self.layers[-1](h)
        h = T.transpose(h, (0, 2, 3, 1))
        return T.reshape(h, (-1, cfg.n_positions, cfg.embed_dim))

    def named_params(self):
        out = []
        for i, layer in enumerate(self.layers):
            out += layer.named_params(f"enc/{i}")
        return out


class Decoder:
    """Maps a (B, L, d) grid of codebook vectors back to an image batch."""

    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.n_up = _n_halvings(cfg.image_size, cfg.latent_grid, "decoder")
        chans = [cfg.embed_dim, *cfg.channels, cfg.out_channels]
        self.layers = [ConvLayer(rng, chans[i], chans[i + 1]) for i in range(4)]

    def decode(self, grid_vectors: Tensor) -> Tensor:
        cfg = self.cfg
        g = cfg.latent_grid
        if grid_vectors.ndim != 3 or grid_vectors.shape[1:] != (g * g, cfg.embed_dim):
            raise InvalidInputError(
                f"decoder expects (B, {g * g}, {cfg.embed_dim}), got {grid_vectors.shape}"
            )
        h = T.reshape(grid_vectors, (-1, g, g, cfg.embed_dim))
        h = T.transpose(h, (0, 3, 1, 2))
        for i, layer in enumerate(self.layers):
            if 1 <= i <= self.n_up:
                h = T.upsample2x(h)
            h = layer(h)
            if i < 3:
                h = T.leaky_relu(h, 0.2)
        return h

    def named_params(self):
        out = []
        for i, layer in enumerate(self.layers):
            out += layer.named_params(f"dec/{i}")
        return out


@dataclass(frozen=True)
class TransformConfig:
    variant: str = "index"
    input_shape: tuple[int, int] = (30, 64)  # (T frames, F bins)
    latent_positions: int = 64
    codebook_size: int = 64
    embed_dim: int = 16
    channels: tuple[int, int, int, int] = (16, 32, 32, 32)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidInputError(
                f"unknown variant {self.variant!r}; expected one of {VARIANTS}"
            )
        if min(self.input_shape) < 1:
            raise InvalidInputError(f"bad feature shape {self.input_shape}")

    @property
    def head_width(self) -> int:
        if self.variant == "index":
            return self.latent_positions * self.codebook_size
        return self.latent_positions * self.embed_dim


class TransformNet:
    """Maps a log-mel style feature matrix to the latent grid: per-position
    prototype probabilities for the index variant, raw d-vectors otherwise."""

    def __init__(self, cfg: TransformConfig, rng: np.random.Generator):
        self.cfg = cfg
        chans = [1, *cfg.channels]
        self.convs = [ConvLayer(rng, chans[i], chans[i + 1], stride=2) for i in range(4)]
        t, f = cfg.input_shape
        for _ in range(4):
            t, f = -(-t // 2), -(-f // 2)
        self.flat_dim = cfg.channels[-1] * t * f
        self.head = DenseLayer(rng, self.flat_dim, cfg.head_width)

    def transform(self, feats: Tensor) -> Tensor:
        cfg = self.cfg
        if feats.ndim != 4 or feats.shape[1:] != (1, *cfg.input_shape):
            raise InvalidInputError(
                f"transform expects (B, 1, {cfg.input_shape[0]}, "
                f"{cfg.input_shape[1]}), got {feats.shape}"
            )
        h = feats
        for conv in self.convs:
            h = T.leaky_relu(conv(h), 0.2)
        h = T.reshape(h, (-1, self.flat_dim))
        out = self.head(h)
        if cfg.variant == "index":
            logits = T.reshape(out, (-1, cfg.latent_positions, cfg.codebook_size))
            return T.softmax(logits, axis=-1)
        return T.reshape(out, (-1, cfg.latent_positions, cfg.embed_dim))

    def named_params(self):
        out = []
        for i, conv in enumerate(self.convs):
            out += conv.named_params(f"gnet/{i}")
        out += self.head.named_params("gnet/head")
        return out


def expected_prototypes(probs: Tensor, codebook: Codebook) -> Tensor:
    """Probability-weighted prototype mixture per latent position; the
    differentiable surrogate the index variant feeds downstream while
    training."""
    b, l, k = probs.shape
    if k != codebook.n_prototypes:
        raise InvalidInputError(
            f"probabilities over {k} prototypes vs codebook of {codebook.n_prototypes}"
        )
    flat = T.reshape(probs, (-1, k))
    mixed = T.matmul(flat, codebook.prototypes)
    return T.reshape(mixed, (b, l, codebook.dim))


def imagined_features(gnet: TransformNet, codebook: Codebook | None, feats: Tensor):
    """Inference-path output of the transformation network: hard prototype
    assignments for the index/quantized variants, raw vectors for novq.

    Returns (indices or None, (B, L, d) numpy array).
    """
    out = gnet.transform(feats)
    variant = gnet.cfg.variant
    if variant == "novq":
        return None, out.data.copy()
    if codebook is None:
        raise InvalidInputError(f"variant {variant!r} needs a codebook")
    if variant == "index":
        idx = np.argmax(out.data, axis=-1)
        return idx, codebook.prototypes.data[idx]
    idx, q = quantize(out.data, codebook)
    return idx, q.data.copy()


@dataclass(frozen=True)
class DiscriminatorConfig:
    input_dim: int = 1024  # latent positions * embed dim, flattened
    hidden: tuple[int, ...] = (128, 64)
    activation: str = "tanh"

    def __post_init__(self):
        # the gradient penalty differentiates twice, so activations are
        # restricted to the engine's second-order-capable set
        if self.activation not in ("tanh", "leaky_relu"):
            raise InvalidInputError(
                f"critic activation must be tanh or leaky_relu, got {self.activation!r}"
            )
        if not self.hidden:
            raise InvalidInputError("critic needs at least one hidden layer")


class Critic:
    """Dense network scoring how much a flattened feature grid looks like a
    real quantized visual feature. Built only from ops that support the
    double backward pass the gradient penalty needs."""

    def __init__(self, cfg: DiscriminatorConfig, rng: np.random.Generator):
        self.cfg = cfg
        dims = [cfg.input_dim, *cfg.hidden, 1]
        self.layers = [DenseLayer(rng, dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    def score(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.cfg.input_dim:
            raise InvalidInputError(
                f"critic expects (B, {self.cfg.input_dim}), got {x.shape}"
            )
        h = x
        for layer in self.layers[:-1]:
            h = layer(h)
            h = T.tanh(h) if self.cfg.activation == "tanh" else T.leaky_relu(h, 0.2)
        return T.reshape(self.layers[-1](h), (-1,))

    def named_params(self):
        out = []
        for i, layer in enumerate(self.layers):
            out += layer.named_params(f"critic/{i}")
        return out


@dataclass(frozen=True)
class ClassifierConfig:
    embed_dim: int = 16
    latent_grid: int = 8
    n_classes: int = 3
    channels: tuple[int, ...] = (16, 16, 32, 32, 64, 64, 128, 128)

    def __post_init__(self):
        if len(self.channels) != 8:
            raise InvalidInputError(
                f"classifier uses exactly 8 conv layers, got {len(self.channels)}"
            )
        if self.n_classes < 2:
            raise InvalidInputError(f"need at least 2 classes, got {self.n_classes}")


class SceneClassifier:
    """Eight conv layers with a 2x2 mean-pool after every second one, a global
    max-pool, and a dense readout over classes."""

    N_CONV = 8
    N_MEAN_POOL = 4
    N_MAX_POOL = 1

    def __init__(self, cfg: ClassifierConfig, rng: np.random.Generator):
        self.cfg = cfg
        chans = [cfg.embed_dim, *cfg.channels]
        self.convs = [ConvLayer(rng, chans[i], chans[i + 1]) for i in range(8)]
        self.readout = DenseLayer(rng, cfg.channels[-1], cfg.n_classes)

    def logits(self, grid: Tensor) -> Tensor:
        cfg = self.cfg
        g = cfg.latent_grid
        if grid.ndim != 4 or grid.shape[1:] != (cfg.embed_dim, g, g):
            raise InvalidInputError(
                f"classifier expects (B, {cfg.embed_dim}, {g}, {g}), got {grid.shape}"
            )
        h = grid
        for i, conv in enumerate(self.convs):
            h = T.leaky_relu(conv(h), 0.2)
            if i % 2 == 1:
                h = T.mean_pool2x2(h)
        h = T.max_pool(h)
        return self.readout(h)

    def classify(self, grid: Tensor) -> Tensor:
        """Class probability rows (each sums to one)."""
        return T.softmax(self.logits(grid), axis=-1)

    def named_params(self):
        out = []
        for i, conv in enumerate(self.convs):
            out += conv.named_params(f"clf/{i}")
        out += self.readout.named_params("clf/readout")
        return out


def grid_tensor(vectors: np.ndarray, latent_grid: int, embed_dim: int) -> Tensor:
    """Reshape (B, L, d) feature vectors into the (B, d, g, g) map the
    classifier consumes."""
    arr = np.asarray(vectors, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    b = arr.shape[0]
    arr = arr.reshape(b, latent_grid, latent_grid, embed_dim)
    return T.tensor(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))
