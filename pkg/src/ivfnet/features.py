"""Spectral feature extraction: log-mel, temporal deltas, and MFCC.

All math runs in float64; callers that need float32 (file IO, the training
engine) cast at the boundary. Frames are laid out time-major: a feature
matrix has shape (T, F).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np
from scipy import signal as sp_signal
from scipy.fft import dct as sp_dct

from .errors import InvalidInputError


class FeatureKind(IntEnum):
    """Numeric codes are frozen; they are written into feature files."""

    LOG_MEL = 0
    DELTA = 1
    DELTA_DELTA = 2
    MFCC = 3
    STACKED = 4


# Table-style feature recipe names accepted by the high-level extractor
# and the CLI.
FEATURE_RECIPES = (
    "mfcc",
    "log-mel",
    "log-mel+delta",
    "log-mel+deltas+delta-deltas",
)


@dataclass(frozen=True)
class Waveform:
    """Mono audio samples at a declared sample rate.

    Samples are dimensionless amplitudes, nominally in [-1, 1].
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidInputError(
                f"waveform samples must be 1-D, got shape {samples.shape}"
            )
        if self.sample_rate <= 0:
            raise InvalidInputError(f"sample_rate must be > 0, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 1024
    hop_size: int = 512
    window: str = "hann"

    def __post_init__(self):
        if self.fft_size < 2 or (self.fft_size & (self.fft_size - 1)) != 0:
            raise InvalidInputError(
                f"fft_size must be a power of two >= 2, got {self.fft_size}"
            )
        if not (0 < self.hop_size <= self.fft_size):
            raise InvalidInputError(
                f"hop_size must satisfy 0 < hop <= fft_size, got {self.hop_size}"
            )
        if self.window not in ("hann", "rectangular"):
            raise InvalidInputError(f"unknown window {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window_values(self) -> np.ndarray:
        if self.window == "hann":
            n = np.arange(self.fft_size)
            return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.fft_size)
        return np.ones(self.fft_size)


@dataclass(frozen=True)
class MelFilterbank:
    """Triangular mel filters evaluated at FFT bin center frequencies.

    weights has shape (n_mels, fft_size // 2 + 1); every row is nonnegative,
    zero outside its triangular support, and has at least one positive entry.
    """

    weights: np.ndarray
    f_min: float
    f_max: float
    center_freqs: np.ndarray  # Hz peak of each triangle, for diagnostics

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int,
    fft_size: int,
    sample_rate: int,
    f_min: float = 0.0,
    f_max: float | None = None,
) -> MelFilterbank:
    """Build a bank of triangular filters equally spaced on the mel scale."""
    if f_max is None:
        f_max = sample_rate / 2.0
    if not (0.0 <= f_min < f_max <= sample_rate / 2.0):
        raise InvalidInputError(
            f"need 0 <= f_min < f_max <= sample_rate/2, got "
            f"f_min={f_min}, f_max={f_max}, sample_rate={sample_rate}"
        )
    if n_mels < 1:
        raise InvalidInputError(f"n_mels must be >= 1, got {n_mels}")

    n_bins = fft_size // 2 + 1
    bin_freqs = np.arange(n_bins) * (sample_rate / fft_size)
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))

    weights = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, center, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        weights[m] = np.maximum(0.0, np.minimum(rising, falling))
        if not np.any(weights[m] > 0):
            raise InvalidInputError(
                f"mel band {m} ({lo:.1f}-{hi:.1f} Hz) covers no FFT bin; "
                f"increase fft_size or reduce n_mels"
            )
    return MelFilterbank(
        weights=weights, f_min=f_min, f_max=f_max, center_freqs=edges_hz[1:-1]
    )


@dataclass(frozen=True)
class FeatureMatrix:
    """A (T, F) matrix of frame features plus bookkeeping.

    edge_margin counts frames at each end whose values relied on replicated
    edge context (delta filtering); stacking trims them away.
    """

    data: np.ndarray
    kind: FeatureKind
    frame_rate: float
    edge_margin: int = 0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise InvalidInputError(
                f"feature matrix must be (T, F) with T, F >= 1, got {data.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise InvalidInputError("feature matrix contains non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_features(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class FeatureConfig:
    """Front-end defaults; every field is overridable from the run config."""

    sample_rate: int = 16000
    fft_size: int = 1024
    hop_size: int = 512
    window: str = "hann"
    n_mels: int = 64
    f_min: float = 0.0
    f_max: float = 8000.0
    log_floor: float = 1e-10
    delta_window: int = 2
    n_mfcc: int = 13

    def __post_init__(self):
        self.stft_config()
        self.filterbank()
        if self.log_floor <= 0:
            raise InvalidInputError(f"log_floor must be > 0, got {self.log_floor}")
        if self.delta_window < 1:
            raise InvalidInputError(f"delta_window must be >= 1, got {self.delta_window}")
        if not (1 <= self.n_mfcc <= self.n_mels):
            raise InvalidInputError(
                f"n_mfcc must lie in [1, n_mels], got {self.n_mfcc}"
            )

    def stft_config(self) -> StftConfig:
        return StftConfig(self.fft_size, self.hop_size, self.window)

    def filterbank(self) -> MelFilterbank:
        return mel_filterbank(
            self.n_mels, self.fft_size, self.sample_rate, self.f_min, self.f_max
        )


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Band-limited resampling to target_rate via polyphase filtering."""
    if target_rate <= 0:
        raise InvalidInputError(f"target_rate must be > 0, got {target_rate}")
    if len(w.samples) == 0:
        raise InvalidInputError("cannot resample an empty waveform")
    if w.sample_rate == target_rate:
        return w
    g = math.gcd(target_rate, w.sample_rate)
    out = sp_signal.resample_poly(w.samples, target_rate // g, w.sample_rate // g)
    return Waveform(out, target_rate)


def stft(w: Waveform, cfg: StftConfig) -> np.ndarray:
    """Short-time Fourier transform without padding.

    Returns a complex matrix of shape (T, fft_size // 2 + 1) with
    T = 1 + (len - fft_size) // hop_size; frame t covers samples
    [t * hop, t * hop + fft_size).
    """
    n = len(w.samples)
    if n < cfg.fft_size:
        raise InvalidInputError(
            f"waveform has {n} samples, shorter than one frame ({cfg.fft_size})"
        )
    n_frames = 1 + (n - cfg.fft_size) // cfg.hop_size
    window = cfg.window_values()
    frames = np.lib.stride_tricks.sliding_window_view(w.samples, cfg.fft_size)
    frames = frames[:: cfg.hop_size][:n_frames]
    return np.fft.rfft(frames * window, axis=1)


def log_mel(
    spec: np.ndarray,
    fb: MelFilterbank,
    floor: float = 1e-10,
    frame_rate: float = 0.0,
) -> FeatureMatrix:
    """Log-compressed mel-band energies of an STFT matrix.

    entry[t][m] = ln(max(floor, sum_k weights[m][k] * |spec[t][k]|^2))
    """
    if floor <= 0:
        raise InvalidInputError(f"energy floor must be > 0, got {floor}")
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != fb.weights.shape[1]:
        raise InvalidInputError(
            f"spectrum has {spec.shape} bins but filterbank expects "
            f"(T, {fb.weights.shape[1]})"
        )
    power = np.abs(spec) ** 2
    band_energy = power @ fb.weights.T
    data = np.log(np.maximum(floor, band_energy))
    return FeatureMatrix(data, FeatureKind.LOG_MEL, frame_rate)


_DELTA_KIND = {
    FeatureKind.LOG_MEL: FeatureKind.DELTA,
    FeatureKind.MFCC: FeatureKind.DELTA,
    FeatureKind.STACKED: FeatureKind.DELTA,
    FeatureKind.DELTA: FeatureKind.DELTA_DELTA,
    FeatureKind.DELTA_DELTA: FeatureKind.DELTA_DELTA,
}


def delta(f: FeatureMatrix, window: int = 2) -> FeatureMatrix:
    """Regression slope over a +-window frame neighborhood, per feature bin.

    d_t = sum_{n=1..W} n * (x_{t+n} - x_{t-n}) / (2 * sum_{n=1..W} n^2),
    with out-of-range frames replicated from the edges. Applying this twice
    yields delta-deltas.
    """
    if window < 1:
        raise InvalidInputError(f"delta window must be >= 1, got {window}")
    x = f.data
    t_idx = np.arange(x.shape[0])
    denom = 2.0 * sum(n * n for n in range(1, window + 1))
    out = np.zeros_like(x)
    for n in range(1, window + 1):
        ahead = x[np.minimum(t_idx + n, x.shape[0] - 1)]
        behind = x[np.maximum(t_idx - n, 0)]
        out += n * (ahead - behind)
    out /= denom
    return FeatureMatrix(
        out, _DELTA_KIND[f.kind], f.frame_rate, edge_margin=f.edge_margin + window
    )


def mfcc(lm: FeatureMatrix, n_coeffs: int = 13) -> FeatureMatrix:
    """Orthonormal DCT-II of each log-mel frame, keeping the first n_coeffs."""
    if n_coeffs > lm.n_features:
        raise InvalidInputError(
            f"n_coeffs={n_coeffs} exceeds the {lm.n_features} mel bands"
        )
    if n_coeffs < 1:
        raise InvalidInputError(f"n_coeffs must be >= 1, got {n_coeffs}")
    coeffs = sp_dct(lm.data, type=2, norm="ortho", axis=1)[:, :n_coeffs]
    return FeatureMatrix(coeffs, FeatureKind.MFCC, lm.frame_rate, lm.edge_margin)


def stack_without_padding(parts: list[FeatureMatrix]) -> FeatureMatrix:
    """Concatenate matrices along the feature axis, trimming every matrix to
    the time range where all of them were computed from real (non-replicated)
    context."""
    if not parts:
        raise InvalidInputError("nothing to stack")
    margin = max(p.edge_margin for p in parts)
    n_frames = min(p.n_frames for p in parts)
    if n_frames - 2 * margin < 1:
        raise InvalidInputError(
            f"stacking would trim away all frames (T={n_frames}, margin={margin})"
        )
    lo, hi = margin, n_frames - margin
    data = np.concatenate([p.data[lo:hi] for p in parts], axis=1)
    return FeatureMatrix(data, FeatureKind.STACKED, parts[0].frame_rate)


def extract(w: Waveform, recipe: str, cfg: FeatureConfig) -> FeatureMatrix:
    """Run one of the named feature recipes on a waveform.

    The waveform is resampled to cfg.sample_rate first when rates differ.
    """
    if recipe not in FEATURE_RECIPES:
        raise InvalidInputError(
            f"unknown feature recipe {recipe!r}; expected one of {FEATURE_RECIPES}"
        )
    w = resample(w, cfg.sample_rate)
    spec = stft(w, cfg.stft_config())
    frame_rate = cfg.sample_rate / cfg.hop_size
    lm = log_mel(spec, cfg.filterbank(), cfg.log_floor, frame_rate)
    if recipe == "log-mel":
        return lm
    if recipe == "mfcc":
        return mfcc(lm, cfg.n_mfcc)
    d1 = delta(lm, cfg.delta_window)
    if recipe == "log-mel+delta":
        return stack_without_padding([lm, d1])
    d2 = delta(d1, cfg.delta_window)
    return stack_without_padding([lm, d1, d2])
