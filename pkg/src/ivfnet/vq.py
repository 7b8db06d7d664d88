"""Shared prototype codebook: nearest-prototype quantization, the two
codebook training loss terms, and the straight-through estimator."""
from __future__ import annotations

import logging

import numpy as np

from . import tensor as T
from .errors import InvalidInputError
from .tensor import Tensor, _make_node

log = logging.getLogger(__name__)


class Codebook:
    """K prototype vectors of dimension d, trainable as one (K, d) tensor."""

    def __init__(self, prototypes):
        if isinstance(prototypes, Tensor):
            self.prototypes = prototypes
        else:
            self.prototypes = T.parameter(np.asarray(prototypes, dtype=np.float32))
        k, d = self.prototypes.shape
        if k < 2 or d < 1:
            raise InvalidInputError(f"codebook needs K >= 2, d >= 1, got ({k}, {d})")
        if not np.all(np.isfinite(self.prototypes.data)):
            raise InvalidInputError("codebook prototypes must be finite")

    @classmethod
    def init_random(cls, n_prototypes: int, dim: int, rng: np.random.Generator):
        """Unit-variance Gaussian rows scaled by 1/sqrt(d), redrawn in the
        (vanishingly unlikely) event of duplicate rows."""
        for _ in range(8):
            protos = rng.standard_normal((n_prototypes, dim)) / np.sqrt(dim)
            cb = cls(protos.astype(np.float32))
            if not cb.near_duplicates():
                return cb
        raise InvalidInputError("could not draw a distinct codebook")

    @property
    def n_prototypes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]

    def near_duplicates(self, tol: float = 1e-9) -> list[tuple[int, int]]:
        """Pairs of prototypes closer than tol; duplicates degrade the
        nearest-neighbor tie-break so training flags them."""
        p = self.prototypes.data
        out = []
        for i in range(len(p)):
            d = np.linalg.norm(p[i + 1 :] - p[i], axis=1)
            for j in np.nonzero(d < tol)[0]:
                out.append((i, i + 1 + int(j)))
        return out


def quantize(embedding, codebook: Codebook):
    """Replace each embedding row by its nearest prototype (Euclidean),
    ties broken toward the lowest prototype index.

    Returns (indices, quantized): an int index array with the embedding's
    leading shape, and a tensor of gathered prototype rows through which
    gradients reach the codebook.
    """
    e_data = embedding.data if isinstance(embedding, Tensor) else np.asarray(embedding)
    if e_data.ndim < 2 or e_data.shape[-1] != codebook.dim:
        raise InvalidInputError(
            f"embedding rows must have dim {codebook.dim}, got shape {e_data.shape}"
        )
    flat = e_data.reshape(-1, codebook.dim)
    protos = codebook.prototypes.data
    indices = np.empty(len(flat), dtype=np.int64)
    chunk = 4096
    for lo in range(0, len(flat), chunk):
        diff = flat[lo : lo + chunk, None, :] - protos[None, :, :]
        d2 = np.sum(np.square(diff), axis=2)
        indices[lo : lo + chunk] = np.argmin(d2, axis=1)
    indices = indices.reshape(e_data.shape[:-1])
    return indices, T.embedding_lookup(codebook.prototypes, indices)


def vq_losses(embedding: Tensor, quantized: Tensor, beta: float):
    """The two quantization loss terms, averaged over rows.

    codebook term   mean ||sg(e) - q||^2   (moves prototypes toward the
                                            encoder output)
    commitment term beta * mean ||e - sg(q)||^2  (moves the encoder toward
                                                  its assigned prototypes)
    Gradient flow is one-sided in each term via stop_gradient.
    """
    if beta < 0:
        raise InvalidInputError(f"commitment weight must be >= 0, got {beta}")
    if embedding.shape != quantized.shape:
        raise InvalidInputError(
            f"embedding {embedding.shape} vs quantized {quantized.shape}"
        )
    d_cb = T.sub(T.stop_gradient(embedding), quantized)
    codebook_term = T.mean(T.reshape(T.sum(T.mul(d_cb, d_cb), axis=-1), (-1,)))
    d_cm = T.sub(embedding, T.stop_gradient(quantized))
    commitment_term = T.scale(
        T.mean(T.reshape(T.sum(T.mul(d_cm, d_cm), axis=-1), (-1,))), beta
    )
    return codebook_term, commitment_term


def straight_through(embedding: Tensor, quantized: Tensor) -> Tensor:
    """Forward the quantized values unchanged; route the entire downstream
    gradient to the embedding (none to the quantized side)."""
    if embedding.shape != quantized.shape:
        raise InvalidInputError(
            f"embedding {embedding.shape} vs quantized {quantized.shape}"
        )
    return _make_node(quantized.data, ((embedding, lambda g: g),), "straight_through")


class PrototypeUsage:
    """Tracks how recently each prototype was selected; prototypes unseen for
    `window` consecutive updates are reported (and logged) as dead."""

    def __init__(self, n_prototypes: int, window: int = 1000):
        self.window = window
        self.step = 0
        self.last_used = np.zeros(n_prototypes, dtype=np.int64)
        self._reported: set[int] = set()

    def update(self, indices) -> None:
        self.step += 1
        self.last_used[np.unique(np.asarray(indices))] = self.step

    def dead(self) -> np.ndarray:
        if self.step < self.window:
            return np.zeros(0, dtype=np.int64)
        return np.nonzero(self.step - self.last_used >= self.window)[0]

    def log_new_dead(self) -> None:
        fresh = [int(i) for i in self.dead() if int(i) not in self._reported]
        if fresh:
            self._reported.update(fresh)
            log.warning(
                "prototypes unused for %d steps: %s", self.window, fresh
            )
