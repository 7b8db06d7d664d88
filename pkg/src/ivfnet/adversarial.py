"""Wasserstein critic losses with gradient penalty.

The critic is trained to ascend mean(real scores) - mean(fake scores) minus a
penalty that pushes the norm of its input gradient toward one, measured at
random convex combinations of real and fake feature batches. The generator
side descends -mean(fake scores).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import InvalidInputError
from .tensor import Tensor


@dataclass(frozen=True)
class GanLossConfig:
    lambda_gp: float = 10.0
    critic_steps: int = 5

    def __post_init__(self):
        if self.lambda_gp < 0:
            raise InvalidInputError(f"lambda_gp must be >= 0, got {self.lambda_gp}")
        if self.critic_steps < 1:
            raise InvalidInputError(
                f"critic_steps must be >= 1, got {self.critic_steps}"
            )


def interpolate(q_fake, q_real, w) -> Tensor:
    """Per-sample convex combination w * fake + (1 - w) * real.

    w holds one scalar per batch element. The result is a fresh leaf that
    requires grad: the penalty differentiates the critic at these points, and
    no gradient should leak back into the generator from here.
    """
    fake = q_fake.data if isinstance(q_fake, Tensor) else np.asarray(q_fake)
    real = q_real.data if isinstance(q_real, Tensor) else np.asarray(q_real)
    if fake.shape != real.shape:
        raise InvalidInputError(
            f"interpolate: fake {fake.shape} vs real {real.shape}"
        )
    w = np.asarray(w, dtype=fake.dtype)
    if w.shape != (fake.shape[0],):
        raise InvalidInputError(
            f"interpolate: need one weight per sample ({fake.shape[0]},), got {w.shape}"
        )
    wb = w.reshape((-1,) + (1,) * (fake.ndim - 1))
    return T.parameter(wb * fake + (1.0 - wb) * real)


def gradient_penalty(score_fn, c: Tensor, lambda_gp: float) -> Tensor:
    """lambda * mean((||d score / d c||_2 - 1)^2) over the batch.

    score_fn maps a (B, m) tensor to (B,) scores and must be built from the
    engine's second-order-capable ops; anything else raises
    SecondOrderUnsupportedError when the penalty is differentiated.
    """
    if c.ndim != 2:
        raise InvalidInputError(f"gradient_penalty: c must be (B, m), got {c.shape}")
    if not c.requires_grad:
        raise InvalidInputError("gradient_penalty: c must require grad")
    scores = score_fn(c)
    if scores.shape != (c.shape[0],):
        raise InvalidInputError(
            f"gradient_penalty: scores must be ({c.shape[0]},), got {scores.shape}"
        )
    (g_c,) = T.grad(T.sum(scores), [c])
    norms = T.l2_norm(g_c, axis=1)
    off = T.sub(norms, T.constant(np.asarray(1.0, dtype=norms.dtype)))
    return T.scale(T.mean(T.mul(off, off)), lambda_gp)


def critic_loss(d_real: Tensor, d_fake: Tensor, gp: Tensor) -> Tensor:
    """mean(real) - mean(fake) - penalty: the objective the critic ascends.
    Training minimizes its negation for the critic's parameters."""
    if d_real.shape != d_fake.shape:
        raise InvalidInputError(
            f"critic_loss: batch mismatch {d_real.shape} vs {d_fake.shape}"
        )
    return T.sub(T.sub(T.mean(d_real), T.mean(d_fake)), gp)


def generator_adv_loss(d_fake: Tensor) -> Tensor:
    """-mean(fake scores); descending it makes the critic score fakes higher."""
    return T.scale(T.mean(d_fake), -1.0)
