"""Checkpoint format: text manifest + flat little-endian float32 blob.

The manifest lists one parameter per line as ``name dtype shape`` in
model traversal order; the blob concatenates the raw values in the same
order. Saving and loading round-trips byte-exactly because parameters
are stored in float32 already.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.txt"
WEIGHTS_NAME = "weights.bin"


def save_checkpoint(model, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    blobs = []
    for name, p in model.named_parameters():
        shape = "x".join(str(s) for s in p.data.shape) or "scalar"
        lines.append(f"{name} float32 {shape}")
        blobs.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    (directory / MANIFEST_NAME).write_text("\n".join(lines) + "\n")
    (directory / WEIGHTS_NAME).write_bytes(b"".join(blobs))
    return directory


def read_manifest(directory):
    entries = []
    for line in (Path(directory) / MANIFEST_NAME).read_text().splitlines():
        if not line.strip():
            continue
        name, dtype, shape = line.split()
        dims = () if shape == "scalar" else tuple(int(s) for s in shape.split("x"))
        entries.append((name, dtype, dims))
    return entries


def load_checkpoint(model, directory) -> None:
    """Load weights into ``model``, validating names and shapes in order.

    The first parameter whose name or shape disagrees with the manifest
    is reported; nothing is written before validation passes.
    """
    directory = Path(directory)
    entries = read_manifest(directory)
    params = list(model.named_parameters())
    if len(entries) != len(params):
        raise ValueError(
            f"checkpoint has {len(entries)} parameters but model has {len(params)}")
    for (name, dtype, dims), (model_name, p) in zip(entries, params):
        if name != model_name:
            raise ValueError(
                f"checkpoint/model mismatch at parameter {name!r}: model expects "
                f"{model_name!r}")
        if dims != p.data.shape:
            raise ValueError(
                f"checkpoint/model shape mismatch at parameter {name!r}: "
                f"{dims} vs {p.data.shape}")
        if dtype != "float32":
            raise ValueError(f"unsupported dtype {dtype!r} for parameter {name!r}")

    blob = (directory / WEIGHTS_NAME).read_bytes()
    expected = sum(int(np.prod(dims, dtype=np.int64)) for _, _, dims in entries) * 4
    if len(blob) != expected:
        raise ValueError(
            f"weights blob is {len(blob)} bytes, manifest implies {expected}")
    offset = 0
    for (name, _, dims), (_, p) in zip(entries, params):
        count = int(np.prod(dims, dtype=np.int64))
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        p.data = values.reshape(dims).astype(p.data.dtype, copy=True)
        offset += count * 4
