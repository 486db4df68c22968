"""FMAP container I/O.

The format is the interchange contract with the segmentation backend::

    magic 'FMAP\\x00\\x00\\x00\\x01' | H u32-LE
    | per layer: height u32-LE, width u32-LE, channels u32-LE
    | per layer: height*width*channels float32-LE, row-major,
      channel axis fastest

Writing is deterministic; reading validates sizes and finiteness.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FMAP\x00\x00\x00\x01"


class FmapError(ValueError):
    pass


def write_fmap(layers: list[np.ndarray], path) -> None:
    """Write (height, width, channels) float arrays as one FMAP file."""
    arrays = []
    for layer in layers:
        arr = np.ascontiguousarray(layer, dtype="<f4")
        if arr.ndim != 3:
            raise FmapError(f"layers must be 3-d, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise FmapError("layer contains non-finite values")
        arrays.append(arr)
    if not arrays:
        raise FmapError("at least one layer is required")
    parts = [MAGIC, struct.pack("<I", len(arrays))]
    for arr in arrays:
        parts.append(struct.pack("<III", *arr.shape))
    for arr in arrays:
        parts.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_fmap(path) -> list[np.ndarray]:
    """Parse an FMAP file into (height, width, channels) float32 arrays."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise FmapError(f"{path}: bad magic")
    pos = len(MAGIC)
    (n_layers,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    shapes = []
    for _ in range(n_layers):
        shape = struct.unpack_from("<III", blob, pos)
        pos += 12
        shapes.append(shape)
    layers = []
    for shape in shapes:
        count = shape[0] * shape[1] * shape[2]
        if len(blob) < pos + 4 * count:
            raise FmapError(f"{path}: truncated payload")
        flat = np.frombuffer(blob, "<f4", count, pos)
        if not np.all(np.isfinite(flat)):
            raise FmapError(f"{path}: non-finite payload value")
        layers.append(flat.reshape(shape).copy())
        pos += 4 * count
    if pos != len(blob):
        raise FmapError(f"{path}: trailing bytes")
    return layers
