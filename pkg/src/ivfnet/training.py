"""Two-stage training.

Stage A fits the image autoencoder (with its shared codebook) on paired
audio-visual data while the transformation network learns adversarially, via
a Wasserstein critic with gradient penalty, to make its audio-derived feature
grids indistinguishable from the encoder's quantized ones. Stage B freezes
everything from stage A, converts audio to imagined visual features along the
inference path, and trains the scene classifier on them with cross-entropy.

Each network has its own Adam optimizer over its own parameters; the codebook
is moved only by its quantization loss term. All randomness flows from one
seed, so runs are bit-reproducible.
"""
from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import adversarial as adv
from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import CheckpointError, InvalidInputError, NumericError
from .networks import (
    ClassifierConfig,
    Critic,
    Decoder,
    DecoderConfig,
    DiscriminatorConfig,
    Encoder,
    EncoderConfig,
    SceneClassifier,
    TransformConfig,
    TransformNet,
    expected_prototypes,
    grid_tensor,
    imagined_features,
)
from .tensor import Tensor
from .vq import Codebook, PrototypeUsage, quantize, straight_through, vq_losses

LOSS_CSV_COLUMNS = ("step", "L_E_recon", "L_E_codebook", "L_E_commit", "L_D", "L_G_adv", "wall_ms")
DELTA_I_FLOOR = 1e-6
FEATURE_STD_FLOOR = 1e-3


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 32
    image_channels: int = 3
    latent_grid: int = 8
    embed_dim: int = 16
    codebook_size: int = 64
    commitment_beta: float = 0.25
    variant: str = "index"
    encoder_channels: tuple[int, ...] = (32, 64, 64)
    decoder_channels: tuple[int, ...] = (64, 32, 16)
    g_channels: tuple[int, ...] = (16, 32, 32, 32)
    critic_hidden: tuple[int, ...] = (128, 64)
    critic_activation: str = "tanh"
    classifier_channels: tuple[int, ...] = (16, 16, 32, 32, 64, 64, 128, 128)
    n_classes: int = 3

    @property
    def n_positions(self) -> int:
        return self.latent_grid**2


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 16
    epochs: int = 1  # echoed into checkpoints; the desk loops are step-driven
    seed: int = 0
    steps_a: int = 500
    steps_b: int = 2000
    classifier_learning_rate: float = 1e-3
    checkpoint_every: int = 500

    def __post_init__(self):
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise InvalidInputError("adam betas must lie in [0, 1)")
        if self.learning_rate <= 0 or self.classifier_learning_rate <= 0:
            raise InvalidInputError("learning rates must be > 0")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")


# named optimizer presets; the two paper-derived ones keep beta2 at its usable
# default since the quoted figure duplicates the learning rate
PRESETS: dict[str, dict] = {
    "desk": {},
    "paper-s33": {"learning_rate": 0.001, "batch_size": 16, "epochs": 9000},
    "paper-s41": {"learning_rate": 0.0002, "batch_size": 640, "epochs": 5000},
}


def apply_preset(tc: TrainConfig, preset: str) -> TrainConfig:
    if preset not in PRESETS:
        raise InvalidInputError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
    return replace(tc, **PRESETS[preset])


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


def adam_step(param, grad, m, v, t, lr, b1, b2, eps):
    """One bias-corrected Adam update; returns (param, m, v) as new arrays."""
    m = b1 * m + (1.0 - b1) * grad
    v = b2 * v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class Adam:
    def __init__(self, named_params, lr, b1=0.5, b2=0.999, eps=1e-8):
        self.named = list(named_params)
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.named}
        self.v = {name: np.zeros_like(p.data) for name, p in self.named}

    def step(self, grads) -> None:
        """grads is aligned with the named parameter list."""
        self.t += 1
        for (name, p), g in zip(self.named, grads):
            gd = g.data if isinstance(g, Tensor) else g
            p.data, self.m[name], self.v[name] = adam_step(
                p.data, gd, self.m[name], self.v[name], self.t,
                self.lr, self.b1, self.b2, self.eps,
            )

    def state_components(self) -> dict[str, np.ndarray]:
        out = {}
        for name, _ in self.named:
            out[f"opt/{name}/m"] = self.m[name]
            out[f"opt/{name}/v"] = self.v[name]
        return out

    def load_state(self, components: dict[str, np.ndarray], t: int) -> None:
        self.t = t
        for name, _ in self.named:
            self.m[name] = components[f"opt/{name}/m"].copy()
            self.v[name] = components[f"opt/{name}/v"].copy()


# ---------------------------------------------------------------------------
# losses and statistics
# ---------------------------------------------------------------------------


def reconstruction_loss(img: Tensor, recon: Tensor, delta_i: np.ndarray) -> Tensor:
    """Mean over batch and pixels of (I - I')^2 / delta, delta the per-pixel
    training-set variance (floored, frozen)."""
    if img.shape != recon.shape:
        raise InvalidInputError(
            f"reconstruction_loss: image {img.shape} vs reconstruction {recon.shape}"
        )
    if delta_i.shape != img.shape[1:]:
        raise InvalidInputError(
            f"reconstruction_loss: statistics {delta_i.shape} vs image {img.shape[1:]}"
        )
    diff = T.sub(img, recon)
    scaled = T.div(T.mul(diff, diff), T.constant(delta_i[None].astype(np.float32)))
    return T.mean(scaled)


def image_statistics(images: np.ndarray) -> np.ndarray:
    """Per-pixel variance over the training images, floored so silence-flat
    datasets stay well-defined."""
    var = np.var(np.asarray(images, dtype=np.float64), axis=0)
    return np.maximum(var, DELTA_I_FLOOR).astype(np.float32)


def feature_statistics(feats: np.ndarray):
    """Per-bin mean/std of (N, T, F) audio features, std floored."""
    flat = np.asarray(feats, dtype=np.float64).reshape(-1, feats.shape[-1])
    mean = flat.mean(axis=0)
    std = np.maximum(flat.std(axis=0), FEATURE_STD_FLOOR)
    return mean.astype(np.float32), std.astype(np.float32)


def _require_finite(value: float, term: str, step: int) -> float:
    if not np.isfinite(value):
        raise NumericError(f"{term} is not finite at step {step}")
    return float(value)


# ---------------------------------------------------------------------------
# model bundle
# ---------------------------------------------------------------------------


@dataclass
class ModelBundle:
    """Every learnable component plus frozen dataset statistics."""

    mc: ModelConfig
    feature_shape: tuple[int, int]
    encoder: Encoder
    decoder: Decoder
    codebook: Codebook
    gnet: TransformNet
    critic: Critic
    classifier: SceneClassifier | None = None
    delta_i: np.ndarray | None = None
    audio_mean: np.ndarray | None = None
    audio_std: np.ndarray | None = None
    step_a: int = 0
    step_b: int = 0

    def stage_a_named_params(self):
        return (
            self.encoder.named_params()
            + self.decoder.named_params()
            + [("codebook/prototypes", self.codebook.prototypes)]
            + self.gnet.named_params()
            + self.critic.named_params()
        )

    def named_params(self):
        out = list(self.stage_a_named_params())
        if self.classifier is not None:
            out += self.classifier.named_params()
        return out

    def components(self) -> dict[str, np.ndarray]:
        out = {name: p.data for name, p in self.named_params()}
        if self.delta_i is not None:
            out["stats/delta_i"] = self.delta_i
        if self.audio_mean is not None:
            out["stats/audio_mean"] = self.audio_mean
            out["stats/audio_std"] = self.audio_std
        return out

    def normalize_audio(self, feats: np.ndarray) -> np.ndarray:
        """(N, T, F) raw features -> (N, 1, T, F) float32 standardized with
        the frozen stage-A statistics."""
        if self.audio_mean is None:
            raise InvalidInputError("audio statistics not set; run stage A first")
        arr = (np.asarray(feats) - self.audio_mean) / self.audio_std
        return arr.astype(np.float32)[:, None, :, :]


def build_bundle(mc: ModelConfig, feature_shape, seed: int) -> ModelBundle:
    ss = np.random.SeedSequence([seed, 0x6D6F64])  # model-init stream
    r_enc, r_dec, r_cb, r_g, r_d, r_clf = (
        np.random.default_rng(c) for c in ss.spawn(6)
    )
    enc = Encoder(
        EncoderConfig(mc.image_size, mc.image_channels, tuple(mc.encoder_channels),
                      mc.latent_grid, mc.embed_dim),
        r_enc,
    )
    dec = Decoder(
        DecoderConfig(mc.image_size, mc.image_channels, tuple(mc.decoder_channels),
                      mc.latent_grid, mc.embed_dim),
        r_dec,
    )
    cb = Codebook.init_random(mc.codebook_size, mc.embed_dim, r_cb)
    gnet = TransformNet(
        TransformConfig(mc.variant, tuple(feature_shape), mc.n_positions,
                        mc.codebook_size, mc.embed_dim, tuple(mc.g_channels)),
        r_g,
    )
    critic = Critic(
        DiscriminatorConfig(mc.n_positions * mc.embed_dim, tuple(mc.critic_hidden),
                            mc.critic_activation),
        r_d,
    )
    clf = SceneClassifier(
        ClassifierConfig(mc.embed_dim, mc.latent_grid, mc.n_classes,
                         tuple(mc.classifier_channels)),
        r_clf,
    )
    return ModelBundle(
        mc=mc, feature_shape=tuple(feature_shape), encoder=enc, decoder=dec,
        codebook=cb, gnet=gnet, critic=critic, classifier=clf,
    )


def _soft_fake_grid(bundle: ModelBundle, feats_norm: np.ndarray) -> Tensor:
    """Training-path output of the transformation network as a (B, L, d)
    tensor with gradients flowing into it."""
    a = T.tensor(feats_norm)
    out = bundle.gnet.transform(a)
    variant = bundle.mc.variant
    if variant == "index":
        return expected_prototypes(out, bundle.codebook)
    if variant == "quantized":
        _, q = quantize(out.data, bundle.codebook)
        return straight_through(out, q)
    return out


def _real_grid_data(bundle: ModelBundle, images: np.ndarray) -> np.ndarray:
    """Quantized encoder features for a batch of images, as plain arrays."""
    e = bundle.encoder.encode(T.tensor(images))
    if bundle.mc.variant == "novq":
        return e.data
    _, q = quantize(e.data, bundle.codebook)
    return q.data


# ---------------------------------------------------------------------------
# stage A
# ---------------------------------------------------------------------------


def train_stage_a(
    pairs,
    mc: ModelConfig,
    tc: TrainConfig,
    gc: adv.GanLossConfig,
    loss_csv=None,
    ckpt_path=None,
    quiet: bool = True,
) -> ModelBundle:
    """Fit encoder, decoder, codebook, transformation network, and critic on
    audio-visual pairs. Returns the trained bundle; optionally writes the
    loss history CSV and periodic/final checkpoints."""
    if not pairs:
        raise InvalidInputError("stage A needs at least one audio-visual pair")
    images = np.stack([p.image for p in pairs]).astype(np.float32)
    feats = np.stack([p.audio.data for p in pairs]).astype(np.float32)
    feature_shape = feats.shape[1:]

    bundle = build_bundle(mc, feature_shape, tc.seed)
    bundle.delta_i = image_statistics(images)
    bundle.audio_mean, bundle.audio_std = feature_statistics(feats)
    feats_norm = bundle.normalize_audio(feats)

    opt_args = dict(lr=tc.learning_rate, b1=tc.adam_beta1, b2=tc.adam_beta2,
                    eps=tc.adam_epsilon)
    opt_enc = Adam(bundle.encoder.named_params(), **opt_args)
    opt_dec = Adam(bundle.decoder.named_params(), **opt_args)
    opt_cb = Adam([("codebook/prototypes", bundle.codebook.prototypes)], **opt_args)
    opt_g = Adam(bundle.gnet.named_params(), **opt_args)
    opt_d = Adam(bundle.critic.named_params(), **opt_args)
    optimizers = [opt_enc, opt_dec, opt_cb, opt_g, opt_d]

    ss = np.random.SeedSequence([tc.seed, 0x747261])  # training stream
    data_rng, w_rng = (np.random.default_rng(c) for c in ss.spawn(2))
    usage = PrototypeUsage(mc.codebook_size) if mc.variant != "novq" else None
    n = len(pairs)
    rows = []

    for step in range(1, tc.steps_a + 1):
        t0 = time.perf_counter()

        # -- autoencoder (and codebook) update
        batch = data_rng.integers(0, n, tc.batch_size)
        imgs = T.tensor(images[batch])
        e = bundle.encoder.encode(imgs)
        if mc.variant == "novq":
            recon = bundle.decoder.decode(e)
            l_rec = reconstruction_loss(imgs, recon, bundle.delta_i)
            loss_e = l_rec
            l_cb_val = l_commit_val = 0.0
        else:
            idx, q = quantize(e, bundle.codebook)
            usage.update(idx)
            usage.log_new_dead()
            recon = bundle.decoder.decode(straight_through(e, q))
            l_rec = reconstruction_loss(imgs, recon, bundle.delta_i)
            l_cb, l_commit = vq_losses(e, q, mc.commitment_beta)
            loss_e = T.add(T.add(l_rec, l_cb), l_commit)
            l_cb_val = float(l_cb.data)
            l_commit_val = float(l_commit.data)
        l_rec_val = _require_finite(float(l_rec.data), "L_E_recon", step)
        _require_finite(l_cb_val, "L_E_codebook", step)
        _require_finite(l_commit_val, "L_E_commit", step)

        ae_named = opt_enc.named + opt_dec.named
        if mc.variant != "novq":
            ae_named = ae_named + opt_cb.named
        ae_params = [p for _, p in ae_named]
        grads = T.grad(loss_e, ae_params)
        n_enc, n_dec = len(opt_enc.named), len(opt_dec.named)
        opt_enc.step(grads[:n_enc])
        opt_dec.step(grads[n_enc : n_enc + n_dec])
        if mc.variant != "novq":
            opt_cb.step(grads[n_enc + n_dec :])

        # -- critic updates
        l_d_val = 0.0
        d_params = [p for _, p in opt_d.named]
        for _ in range(gc.critic_steps):
            batch_d = data_rng.integers(0, n, tc.batch_size)
            real = _real_grid_data(bundle, images[batch_d])
            fake = _soft_fake_grid(bundle, feats_norm[batch_d]).data
            real_flat = T.tensor(real.reshape(len(batch_d), -1))
            fake_flat = T.tensor(fake.reshape(len(batch_d), -1))
            d_real = bundle.critic.score(real_flat)
            d_fake = bundle.critic.score(fake_flat)
            w = w_rng.uniform(0.0, 1.0, len(batch_d))
            c = adv.interpolate(fake_flat, real_flat, w)
            gp = adv.gradient_penalty(bundle.critic.score, c, gc.lambda_gp)
            l_d = adv.critic_loss(d_real, d_fake, gp)
            l_d_val = _require_finite(float(l_d.data), "L_D", step)
            opt_d.step(T.grad(T.scale(l_d, -1.0), d_params))

        # -- generator update
        batch_g = data_rng.integers(0, n, tc.batch_size)
        fake_grid = _soft_fake_grid(bundle, feats_norm[batch_g])
        fake_flat = T.reshape(fake_grid, (len(batch_g), -1))
        l_g = adv.generator_adv_loss(bundle.critic.score(fake_flat))
        l_g_val = _require_finite(float(l_g.data), "L_G_adv", step)
        opt_g.step(T.grad(l_g, [p for _, p in opt_g.named]))

        bundle.step_a = step
        wall_ms = (time.perf_counter() - t0) * 1000.0
        rows.append((step, l_rec_val, l_cb_val, l_commit_val, l_d_val, l_g_val, wall_ms))
        if not quiet and (step % 50 == 0 or step == 1):
            print(f"[stage A] step {step}: recon {l_rec_val:.4f} critic {l_d_val:.4f}")

        if ckpt_path and tc.checkpoint_every and step % tc.checkpoint_every == 0 and step < tc.steps_a:
            save_bundle(_cadence_path(ckpt_path, step), bundle, optimizers, tc, gc)

    if loss_csv:
        _write_loss_csv(loss_csv, rows)
    if ckpt_path:
        save_bundle(ckpt_path, bundle, optimizers, tc, gc)
    return bundle


def _cadence_path(path, step):
    p = Path(path)
    return p.with_name(f"{p.stem}_step{step}{p.suffix}")


def _write_loss_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOSS_CSV_COLUMNS)
        for step, *vals, wall in rows:
            writer.writerow(
                [step, *(format(v, ".9g") for v in vals), format(wall, ".3f")]
            )


# ---------------------------------------------------------------------------
# stage B
# ---------------------------------------------------------------------------


def imagined_vectors(bundle: ModelBundle, feats: np.ndarray, batch: int = 64) -> np.ndarray:
    """Inference-path imagined visual features for (N, T, F) raw audio
    features: hard prototype assignments for the index/quantized variants,
    raw mapped vectors for novq. Returns (N, L, d)."""
    feats_norm = bundle.normalize_audio(feats)
    cb = None if bundle.mc.variant == "novq" else bundle.codebook
    out = []
    for lo in range(0, len(feats_norm), batch):
        _, vecs = imagined_features(bundle.gnet, cb, T.tensor(feats_norm[lo : lo + batch]))
        out.append(vecs)
    return np.concatenate(out, axis=0)


def train_stage_b(
    labeled_pairs,
    bundle: ModelBundle,
    tc: TrainConfig,
    heldout_pairs=None,
    shuffle_labels: bool = False,
    loss_csv=None,
    ckpt_path=None,
    eval_every: int = 250,
    quiet: bool = True,
) -> ModelBundle:
    """Train the scene classifier on imagined visual features while the
    transformation network, codebook, and the rest of stage A stay frozen.

    With heldout_pairs given, accuracy is probed every eval_every steps and
    the best classifier weights are restored at the end.
    """
    if bundle.gnet is None or (bundle.mc.variant != "novq" and bundle.codebook is None):
        raise CheckpointError("stage B needs the frozen transformation network and codebook")
    feats = np.stack([p.audio.data for p in labeled_pairs]).astype(np.float32)
    labels = np.array([p.label for p in labeled_pairs])
    if any(l is None for l in labels.tolist()):
        raise InvalidInputError("stage B needs labeled audio")

    mc = bundle.mc
    ss = np.random.SeedSequence([tc.seed, 0x636C66])  # classifier stream
    data_rng, shuffle_rng = (np.random.default_rng(c) for c in ss.spawn(2))
    if shuffle_labels:
        labels = labels[shuffle_rng.permutation(len(labels))]

    vecs = imagined_vectors(bundle, feats)
    held_vecs = held_labels = None
    if heldout_pairs is not None:
        held_vecs = imagined_vectors(
            bundle, np.stack([p.audio.data for p in heldout_pairs]).astype(np.float32)
        )
        held_labels = np.array([p.label for p in heldout_pairs])

    clf = bundle.classifier
    opt = Adam(clf.named_params(), lr=tc.classifier_learning_rate,
               b1=tc.adam_beta1, b2=tc.adam_beta2, eps=tc.adam_epsilon)
    clf_params = [p for _, p in opt.named]
    n = len(vecs)
    best = None  # (accuracy, step, weights)
    rows = []

    for step in range(1, tc.steps_b + 1):
        t0 = time.perf_counter()
        batch = data_rng.integers(0, n, tc.batch_size)
        grid = grid_tensor(vecs[batch], mc.latent_grid, mc.embed_dim)
        loss = T.cross_entropy_with_logits(clf.logits(grid), labels[batch])
        loss_val = _require_finite(float(loss.data), "classifier_loss", step)
        opt.step(T.grad(loss, clf_params))
        bundle.step_b = step
        rows.append((step, loss_val, (time.perf_counter() - t0) * 1000.0))

        if held_vecs is not None and (step % eval_every == 0 or step == tc.steps_b):
            acc = _accuracy_on_vectors(bundle, held_vecs, held_labels)
            if not quiet:
                print(f"[stage B] step {step}: loss {loss_val:.4f} heldout {acc:.3f}")
            if best is None or acc > best[0]:
                best = (acc, step, {name: p.data.copy() for name, p in opt.named})

    if best is not None:
        for name, p in opt.named:
            p.data = best[2][name]

    if loss_csv:
        with open(loss_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "classifier_loss", "wall_ms"])
            for step, v, wall in rows:
                writer.writerow([step, format(v, ".9g"), format(wall, ".3f")])
    if ckpt_path:
        save_bundle(ckpt_path, bundle, [opt], tc, None)
    return bundle


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # confusion[true][predicted]
    split_tag: str = ""


def predict(bundle: ModelBundle, feats: np.ndarray, batch: int = 64) -> np.ndarray:
    if bundle.classifier is None:
        raise CheckpointError("no classifier in this checkpoint; run stage B first")
    vecs = imagined_vectors(bundle, feats, batch)
    return _predict_on_vectors(bundle, vecs, batch)


def _predict_on_vectors(bundle, vecs, batch=64) -> np.ndarray:
    mc = bundle.mc
    preds = []
    for lo in range(0, len(vecs), batch):
        grid = grid_tensor(vecs[lo : lo + batch], mc.latent_grid, mc.embed_dim)
        probs = bundle.classifier.classify(grid)
        preds.append(np.argmax(probs.data, axis=1))
    return np.concatenate(preds)


def _accuracy_on_vectors(bundle, vecs, labels) -> float:
    return float(np.mean(_predict_on_vectors(bundle, vecs) == labels))


def evaluate(bundle: ModelBundle, labeled_pairs, split_tag: str = "") -> EvalResult:
    """Accuracy and confusion matrix of the stage-B classifier on labeled
    audio."""
    if not labeled_pairs:
        raise InvalidInputError(f"evaluate: split {split_tag!r} is empty")
    feats = np.stack([p.audio.data for p in labeled_pairs]).astype(np.float32)
    labels = np.array([p.label for p in labeled_pairs])
    preds = predict(bundle, feats)
    n = bundle.mc.n_classes
    confusion = np.zeros((n, n), dtype=np.int64)
    for true, pred in zip(labels, preds):
        confusion[true, pred] += 1
    return EvalResult(float(np.mean(preds == labels)), confusion, split_tag)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def config_echo(mc: ModelConfig, tc: TrainConfig, gc: adv.GanLossConfig | None,
                feature_shape) -> dict:
    echo = {
        "model": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(mc).items()},
        "train": asdict(tc),
        "feature_shape": list(feature_shape),
    }
    if gc is not None:
        echo["gan"] = asdict(gc)
    return echo


def save_bundle(path, bundle: ModelBundle, optimizers, tc: TrainConfig,
                gc: adv.GanLossConfig | None) -> None:
    components = dict(bundle.components())
    opt_t = {}
    for i, opt in enumerate(optimizers or []):
        components.update(opt.state_components())
        opt_t[str(i)] = opt.t
    meta = {
        "format": 1,
        "step_a": bundle.step_a,
        "step_b": bundle.step_b,
        "optimizer_t": opt_t,
        "config": config_echo(bundle.mc, tc, gc, bundle.feature_shape),
    }
    save_checkpoint(path, components, meta)


def load_bundle(path) -> tuple[ModelBundle, dict]:
    components, meta = load_checkpoint(path)
    cfg = meta.get("config", {})
    if "model" not in cfg or "feature_shape" not in cfg:
        raise CheckpointError(f"{path}: missing config echo")
    mc_kwargs = {
        k: (tuple(v) if isinstance(v, list) else v) for k, v in cfg["model"].items()
    }
    mc = ModelConfig(**mc_kwargs)
    bundle = build_bundle(mc, tuple(cfg["feature_shape"]), cfg["train"]["seed"])
    for name, p in bundle.named_params():
        if name not in components:
            raise CheckpointError(f"{path}: missing component {name!r}")
        if components[name].shape != p.data.shape:
            raise CheckpointError(
                f"{path}: component {name!r} has shape {components[name].shape}, "
                f"expected {p.data.shape}"
            )
        p.data = components[name]
    for stat in ("delta_i", "audio_mean", "audio_std"):
        key = f"stats/{stat}"
        if key in components:
            setattr(bundle, stat, components[key])
    bundle.step_a = meta.get("step_a", 0)
    bundle.step_b = meta.get("step_b", 0)
    return bundle, meta
