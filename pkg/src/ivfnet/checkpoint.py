"""Binary checkpoint format.

Layout:
  bytes 0-7    magic "IVFCKPT1"
  bytes 8-11   little-endian u32 header length
  header       UTF-8 JSON with sorted keys:
                 {"meta": {...step, config echo, optimizer counters...},
                  "manifest": [{"name", "shape", "offset"}, ...]}
  data         concatenated little-endian float32 blocks; each manifest
               offset is relative to the start of the data section

Serialization is byte-deterministic: manifest entries are sorted by name and
the JSON writer uses a canonical form, so identical components and metadata
produce identical files.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"IVFCKPT1"


def save_checkpoint(path, components: dict[str, np.ndarray], meta: dict) -> None:
    manifest = []
    blobs = []
    offset = 0
    for name in sorted(components):
        arr = np.ascontiguousarray(components[name], dtype="<f4")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"meta": meta, "manifest": manifest}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Returns (components: dict[str, float32 array], meta: dict)."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from exc
    if len(blob) < 12 or blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (header_len,) = struct.unpack("<I", blob[8:12])
    try:
        header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    data = blob[12 + header_len :]
    components = {}
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 4 * count
        if end > len(data):
            raise CheckpointError(f"{path}: truncated data for {entry['name']!r}")
        components[entry["name"]] = (
            np.frombuffer(data[start:end], dtype="<f4").reshape(shape).copy()
        )
    return components, header["meta"]


def component_checksums(components: dict[str, np.ndarray]) -> dict[str, bytes]:
    """Per-component raw bytes, for bit-level freeze comparisons."""
    return {
        name: np.ascontiguousarray(arr, dtype="<f4").tobytes()
        for name, arr in components.items()
    }
