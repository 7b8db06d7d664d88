"""File formats: PCM WAV audio, IVF1 feature files, and PNG images.

Feature file layout (bit-exact contract):
  bytes 0-3   magic "IVF1"
  bytes 4-15  little-endian u32 fields: kind, T, F
  rest        T * F little-endian IEEE-754 float32, row-major
"""
from __future__ import annotations

import struct
import wave
from pathlib import Path

import numpy as np

from .errors import DataError
from .features import FeatureKind, FeatureMatrix, Waveform

FEATURE_MAGIC = b"IVF1"


def read_wav(path) -> Waveform:
    """Read a 16-bit PCM RIFF WAV file; multi-channel input is averaged to
    mono. Amplitudes are scaled to [-1, 1)."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getsampwidth() != 2:
                raise DataError(
                    f"{path}: only 16-bit PCM WAV is supported, "
                    f"got sample width {fh.getsampwidth()} bytes"
                )
            n_channels = fh.getnchannels()
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError, OSError, struct.error) as exc:
        raise DataError(f"{path}: cannot read WAV file ({exc})") from exc
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if n_channels > 1:
        usable = (len(data) // n_channels) * n_channels
        data = data[:usable].reshape(-1, n_channels).mean(axis=1)
    if len(data) == 0:
        raise DataError(f"{path}: WAV file contains no samples")
    return Waveform(data, rate)


def write_wav(path, w: Waveform) -> None:
    """Write a mono 16-bit PCM WAV file; amplitudes are clipped to [-1, 1)."""
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(pcm.tobytes())


def write_features(path, fm: FeatureMatrix) -> None:
    t, f = fm.data.shape
    header = FEATURE_MAGIC + struct.pack("<III", int(fm.kind), t, f)
    body = fm.data.astype("<f4").tobytes()
    Path(path).write_bytes(header + body)


def read_features(path) -> FeatureMatrix:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 16 or blob[:4] != FEATURE_MAGIC:
        raise DataError(f"{path}: not an IVF1 feature file")
    kind, t, f = struct.unpack("<III", blob[4:16])
    expected = 16 + 4 * t * f
    if len(blob) != expected:
        raise DataError(
            f"{path}: truncated feature file ({len(blob)} bytes, expected {expected})"
        )
    try:
        kind = FeatureKind(kind)
    except ValueError as exc:
        raise DataError(f"{path}: unknown feature kind code {kind}") from exc
    data = np.frombuffer(blob[16:], dtype="<f4").reshape(t, f).astype(np.float64)
    return FeatureMatrix(data, kind, frame_rate=0.0)


def write_png(path, image: np.ndarray) -> None:
    """Write a (C, H, W) float image in [0, 1] as an 8-bit PNG."""
    from PIL import Image

    arr = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    if arr.ndim != 3:
        raise DataError(f"expected (C, H, W) image, got shape {arr.shape}")
    Image.fromarray(np.transpose(arr, (1, 2, 0)), mode="RGB").save(
        str(path), format="PNG"
    )


def read_png(path) -> np.ndarray:
    """Read an RGB PNG as a (3, H, W) float array in [0, 1]."""
    from PIL import Image

    try:
        with Image.open(str(path)) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except OSError as exc:
        raise DataError(f"{path}: cannot read image ({exc})") from exc
    return np.transpose(arr, (2, 0, 1))
