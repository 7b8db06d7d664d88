"""Synthetic audio-visual scene generator and its Bayes oracle.

Each class pairs an audio signature (a three-tone chord plus a band-limited
noise bed at a configurable SNR) with an image signature (a colored sinusoidal
grating with class-specific period and orientation). The oracle classifies
audio from the true generator parameters and provides the accuracy ceiling the
learned pipeline is measured against. "Unseen" evaluation re-renders clips
with held-out nuisance parameters (lower SNR, detuned tones) to emulate a
recording-condition shift.
"""
from __future__ import annotations

import colorsys
import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io as ivf_io
from .errors import DataError, InvalidInputError
from .features import FeatureConfig, FeatureMatrix, Waveform, extract


@dataclass(frozen=True)
class ClassSignature:
    tones: tuple[float, ...]
    noise_band: tuple[float, float]
    color: tuple[float, float, float]
    texture_period: float
    texture_angle: float


@dataclass(frozen=True)
class SyntheticSceneSpec:
    n_classes: int = 3
    sample_rate: int = 16000
    clip_seconds: float = 1.0
    snr_db: float = 20.0
    image_size: int = 32
    signatures: tuple[ClassSignature, ...] = ()

    def __post_init__(self):
        if self.n_classes < 2:
            raise InvalidInputError(f"need >= 2 classes, got {self.n_classes}")
        if not self.signatures:
            object.__setattr__(
                self, "signatures", default_signatures(self.n_classes, self.sample_rate)
            )
        if len(self.signatures) != self.n_classes:
            raise InvalidInputError(
                f"{self.n_classes} classes but {len(self.signatures)} signatures"
            )
        if len({s.tones for s in self.signatures}) != self.n_classes:
            raise InvalidInputError("class audio signatures must be pairwise distinct")

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate * self.clip_seconds))


def default_signatures(n_classes: int, sample_rate: int) -> tuple[ClassSignature, ...]:
    """Log-spaced chord roots keep every tone of every class at least ~9%
    away from any tone of another class, which the oracle's +-3% windows and
    the 2% unseen detune cannot bridge."""
    out = []
    for i in range(n_classes):
        base = 280.0 * (1.32**i)
        tones = (base, 1.1 * base, 1.21 * base)
        if tones[-1] >= sample_rate / 2 * 0.95:
            raise InvalidInputError(
                f"class {i} tones exceed the usable band at {sample_rate} Hz"
            )
        band_lo = 5000.0 + 250.0 * i
        noise_band = (band_lo, min(band_lo + 600.0, sample_rate / 2 - 50.0))
        color = colorsys.hsv_to_rgb(i / n_classes, 0.65, 0.9)
        out.append(
            ClassSignature(
                tones=tones,
                noise_band=noise_band,
                color=color,
                texture_period=4.0 + 2.0 * (i % 5),
                texture_angle=np.pi * i / n_classes,
            )
        )
    return tuple(out)


def render_audio(
    spec: SyntheticSceneSpec,
    label: int,
    rng: np.random.Generator,
    snr_db: float | None = None,
    detune: float = 0.0,
) -> Waveform:
    """Tone chord plus band-limited noise at the requested SNR, peak-scaled."""
    sig = spec.signatures[label]
    snr = spec.snr_db if snr_db is None else snr_db
    n = spec.n_samples
    t = np.arange(n) / spec.sample_rate

    wave = np.zeros(n)
    for f in sig.tones:
        wave += 0.5 * np.sin(2 * np.pi * f * (1.0 + detune) * t + rng.uniform(0, 2 * np.pi))
    tone_power = len(sig.tones) * 0.5**2 / 2.0

    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / spec.sample_rate)
    lo, hi = sig.noise_band
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    noise = np.fft.irfft(spectrum, n)
    noise_power = np.mean(noise**2)
    if noise_power > 0:
        target = tone_power / (10.0 ** (snr / 10.0))
        noise *= np.sqrt(target / noise_power)
    wave += noise

    peak = np.abs(wave).max()
    if peak > 0.9:
        wave *= 0.9 / peak
    return Waveform(wave, spec.sample_rate)


def render_image(
    spec: SyntheticSceneSpec, label: int, rng: np.random.Generator
) -> np.ndarray:
    """Class-colored sinusoidal grating with a random phase, shape (3, S, S)
    in [0, 1]."""
    sig = spec.signatures[label]
    s = spec.image_size
    yy, xx = np.mgrid[0:s, 0:s]
    proj = xx * np.cos(sig.texture_angle) + yy * np.sin(sig.texture_angle)
    grating = np.sin(2 * np.pi * proj / sig.texture_period + rng.uniform(0, 2 * np.pi))
    img = np.empty((3, s, s))
    for c in range(3):
        img[c] = sig.color[c] * (0.55 + 0.4 * grating)
    img += 0.02 * rng.standard_normal((3, s, s))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


@dataclass
class AvPair:
    """One paired sample: image, extracted audio features, and (when the
    split is labeled) the class id."""

    image: np.ndarray
    audio: FeatureMatrix
    label: int | None = None


def _stratified_labels(n: int, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    labels = np.arange(n) % n_classes
    return labels[rng.permutation(n)]


def gen_synthetic(
    spec: SyntheticSceneSpec,
    n: int,
    seed: int,
    feature_cfg: FeatureConfig | None = None,
    recipe: str = "log-mel",
    snr_db: float | None = None,
    detune: float = 0.0,
) -> list[AvPair]:
    """Deterministic stream of labeled audio-visual pairs.

    Labels cover the classes uniformly (stratified, then shuffled by the
    seed). Audio is rendered to a waveform and passed through the feature
    front end; images are rendered directly.
    """
    feature_cfg = feature_cfg or FeatureConfig(sample_rate=spec.sample_rate)
    root = np.random.SeedSequence(seed)
    label_rng = np.random.default_rng(root.spawn(1)[0])
    labels = _stratified_labels(n, spec.n_classes, label_rng)
    pairs = []
    for child, label in zip(root.spawn(n + 1)[1:], labels):
        rng = np.random.default_rng(child)
        w = render_audio(spec, int(label), rng, snr_db=snr_db, detune=detune)
        feats = extract(w, recipe, feature_cfg)
        img = render_image(spec, int(label), rng)
        pairs.append(AvPair(image=img, audio=feats, label=int(label)))
    return pairs


def bayes_oracle_predict(
    spec: SyntheticSceneSpec, w: Waveform, window: float = 0.03
) -> int:
    """Classify from the true generator parameters: the class whose tone
    windows (+-window fraction) capture the most spectral power wins."""
    power = np.abs(np.fft.rfft(w.samples)) ** 2
    freqs = np.fft.rfftfreq(len(w.samples), 1.0 / w.sample_rate)
    scores = np.zeros(spec.n_classes)
    for c, sig in enumerate(spec.signatures):
        for f in sig.tones:
            band = (freqs >= f * (1 - window)) & (freqs <= f * (1 + window))
            scores[c] += power[band].sum()
    return int(np.argmax(scores))


# ---------------------------------------------------------------------------
# on-disk datasets
# ---------------------------------------------------------------------------

SPLITS = ("train", "val", "test_seen", "test_unseen")
DEFAULT_SPLIT_SIZES = {"train": 240, "val": 60, "test_seen": 120, "test_unseen": 120}


def render_dataset(
    spec: SyntheticSceneSpec,
    out_dir,
    seed: int,
    split_sizes: dict[str, int] | None = None,
    unseen_snr_db: float = 10.0,
    unseen_detune: float = 0.02,
) -> None:
    """Write WAV clips, PNG frames, labels.csv per split, and a spec echo.

    The test_unseen split re-renders with the held-out nuisance parameters.
    Output bytes are a pure function of (spec, seed, sizes).
    """
    out_dir = Path(out_dir)
    sizes = dict(DEFAULT_SPLIT_SIZES if split_sizes is None else split_sizes)
    root = np.random.SeedSequence(seed)
    split_seeds = {name: child for name, child in zip(SPLITS, root.spawn(len(SPLITS)))}

    for split in SPLITS:
        n = sizes[split]
        sdir = out_dir / split
        (sdir / "audio").mkdir(parents=True, exist_ok=True)
        (sdir / "images").mkdir(parents=True, exist_ok=True)
        seq = split_seeds[split]
        label_rng = np.random.default_rng(seq.spawn(1)[0])
        labels = _stratified_labels(n, spec.n_classes, label_rng)
        snr = unseen_snr_db if split == "test_unseen" else None
        detune = unseen_detune if split == "test_unseen" else 0.0
        rows = []
        for i, (child, label) in enumerate(zip(seq.spawn(n + 1)[1:], labels)):
            rng = np.random.default_rng(child)
            w = render_audio(spec, int(label), rng, snr_db=snr, detune=detune)
            img = render_image(spec, int(label), rng)
            name = f"clip_{i:05d}"
            ivf_io.write_wav(sdir / "audio" / f"{name}.wav", w)
            ivf_io.write_png(sdir / "images" / f"{name}.png", img)
            rows.append((name, int(label)))
        with open(sdir / "labels.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["clip", "label"])
            writer.writerows(rows)

    echo = {
        "n_classes": spec.n_classes,
        "sample_rate": spec.sample_rate,
        "clip_seconds": spec.clip_seconds,
        "snr_db": spec.snr_db,
        "image_size": spec.image_size,
        "seed": seed,
        "split_sizes": sizes,
        "unseen_snr_db": unseen_snr_db,
        "unseen_detune": unseen_detune,
    }
    (out_dir / "spec.json").write_text(
        json.dumps(echo, sort_keys=True, separators=(",", ":")) + "\n"
    )


def load_split(
    data_dir,
    split: str,
    feature_cfg: FeatureConfig,
    recipe: str = "log-mel",
    with_images: bool = False,
) -> list[AvPair]:
    """Read one split back: extract features from the WAVs and, when asked,
    load the paired frames."""
    sdir = Path(data_dir) / split
    labels_path = sdir / "labels.csv"
    if not labels_path.exists():
        raise DataError(f"{sdir}: no labels.csv; not a dataset split")
    pairs = []
    with open(labels_path, newline="") as fh:
        for row in csv.DictReader(fh):
            name, label = row["clip"], int(row["label"])
            w = ivf_io.read_wav(sdir / "audio" / f"{name}.wav")
            feats = extract(w, recipe, feature_cfg)
            img = None
            if with_images:
                img = ivf_io.read_png(sdir / "images" / f"{name}.png").astype(np.float32)
            pairs.append(AvPair(image=img, audio=feats, label=label))
    if not pairs:
        raise DataError(f"{sdir}: split is empty")
    return pairs


def dataset_spec(data_dir) -> SyntheticSceneSpec:
    """Rebuild the generator spec from a dataset directory's echo."""
    path = Path(data_dir) / "spec.json"
    if not path.exists():
        raise DataError(f"{data_dir}: no spec.json")
    meta = json.loads(path.read_text())
    return SyntheticSceneSpec(
        n_classes=meta["n_classes"],
        sample_rate=meta["sample_rate"],
        clip_seconds=meta["clip_seconds"],
        snr_db=meta["snr_db"],
        image_size=meta["image_size"],
    )
