"""Bit-exact FMAP container for multi-resolution feature stacks.

Wire format, little-endian throughout::

    magic  8 bytes   'FMAP\\x00\\x00\\x00\\x01'
    H      u32       number of layers
    per layer: height u32, width u32, channels u32
    payloads: per layer, height*width*channels float32, row-major with the
              channel axis fastest (one pixel's feature vector is contiguous)

Features are stored as 32-bit floats; all in-memory computation downstream is
64-bit. Label maps round-trip through binary PGM (P5, maxval 255) so any image
viewer can open them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    IoFailure,
    NonFiniteValue,
    TooManyComponents,
    TruncatedPayload,
)

FMAP_MAGIC = b"FMAP\x00\x00\x00\x01"
_HEADER = struct.Struct("<I")
_LAYER_HEADER = struct.Struct("<III")


@dataclass
class LayerGrid:
    """One layer of features on a pixel grid.

    values has shape (height, width, channels), float32.
    """

    height: int
    width: int
    channels: int
    values: np.ndarray

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise ValueError(
                f"layer dims must be positive, got "
                f"{self.height}x{self.width}x{self.channels}"
            )
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        expected = (self.height, self.width, self.channels)
        if self.values.shape != expected:
            raise ValueError(
                f"values shape {self.values.shape} != declared {expected}"
            )
        if not np.all(np.isfinite(self.values)):
            bad = int(np.flatnonzero(~np.isfinite(self.values.ravel()))[0])
            raise NonFiniteValue(
                f"layer payload has non-finite value at flat offset {bad}",
                offset=bad,
            )

    @property
    def grid(self):
        return (self.height, self.width)

    def pixels(self):
        """Features as an (height*width, channels) float64 matrix."""
        return self.values.reshape(-1, self.channels).astype(np.float64)

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=np.float32)
        if values.ndim == 2:
            values = values[:, :, None]
        h, w, c = values.shape
        return cls(h, w, c, values)


@dataclass
class FeatureStack:
    """Ordered per-layer feature grids; layer index h counts from 1."""

    layers: list[LayerGrid] = field(default_factory=list)

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("a feature stack needs at least one layer")

    @property
    def n_layers(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    def __getitem__(self, i):
        return self.layers[i]

    def __eq__(self, other):
        if not isinstance(other, FeatureStack):
            return NotImplemented
        if self.n_layers != other.n_layers:
            return False
        return all(
            a.grid == b.grid
            and a.channels == b.channels
            and np.array_equal(a.values, b.values)
            for a, b in zip(self.layers, other.layers)
        )


@dataclass
class LabelMap:
    """Per-pixel component indices in [0, n_components)."""

    height: int
    width: int
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels)
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise ValueError(f"labels must be integers, got {self.labels.dtype}")
        if self.labels.shape != (self.height, self.width):
            raise ValueError(
                f"labels shape {self.labels.shape} != "
                f"({self.height}, {self.width})"
            )
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("labels must be nonnegative")

    @property
    def grid(self):
        return (self.height, self.width)

    @classmethod
    def from_array(cls, labels):
        labels = np.asarray(labels)
        return cls(labels.shape[0], labels.shape[1], labels)


def read_fmap(path) -> FeatureStack:
    """Parse an FMAP file into a validated FeatureStack.

    Raises BadMagic, TruncatedPayload or NonFiniteValue; each names the
    offending layer/offset. Parsing is total: any byte string either parses
    or raises one of these.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return parse_fmap_bytes(blob)


def parse_fmap_bytes(blob: bytes) -> FeatureStack:
    if blob[: len(FMAP_MAGIC)] != FMAP_MAGIC:
        raise BadMagic(
            f"expected magic {FMAP_MAGIC!r}, got {blob[:len(FMAP_MAGIC)]!r}"
        )
    pos = len(FMAP_MAGIC)
    if len(blob) < pos + _HEADER.size:
        raise TruncatedPayload("file ends inside the layer-count field")
    (n_layers,) = _HEADER.unpack_from(blob, pos)
    pos += _HEADER.size
    if n_layers < 1:
        raise TruncatedPayload("layer count must be at least 1")

    shapes = []
    for h in range(n_layers):
        if len(blob) < pos + _LAYER_HEADER.size:
            raise TruncatedPayload(f"file ends inside the header of layer {h + 1}")
        shape = _LAYER_HEADER.unpack_from(blob, pos)
        pos += _LAYER_HEADER.size
        if min(shape) < 1:
            raise TruncatedPayload(
                f"layer {h + 1} declares a zero dimension {shape}"
            )
        shapes.append(shape)

    layers = []
    for h, (height, width, channels) in enumerate(shapes):
        count = height * width * channels
        nbytes = 4 * count
        if len(blob) < pos + nbytes:
            raise TruncatedPayload(
                f"layer {h + 1} payload needs {nbytes} bytes, "
                f"{len(blob) - pos} remain"
            )
        flat = np.frombuffer(blob, dtype="<f4", count=count, offset=pos)
        pos += nbytes
        finite = np.isfinite(flat)
        if not finite.all():
            bad = int(np.flatnonzero(~finite)[0])
            raise NonFiniteValue(
                f"layer {h + 1} has a non-finite float at element {bad}",
                layer=h + 1,
                offset=bad,
            )
        layers.append(
            LayerGrid(height, width, channels,
                      flat.reshape(height, width, channels).copy())
        )
    if pos != len(blob):
        raise TruncatedPayload(
            f"{len(blob) - pos} trailing bytes after the declared payload"
        )
    return FeatureStack(layers)


def fmap_bytes(stack: FeatureStack) -> bytes:
    """Serialize; deterministic byte output for a given stack."""
    parts = [FMAP_MAGIC, _HEADER.pack(stack.n_layers)]
    for layer in stack:
        parts.append(_LAYER_HEADER.pack(layer.height, layer.width, layer.channels))
    for layer in stack:
        parts.append(np.ascontiguousarray(layer.values, dtype="<f4").tobytes())
    return b"".join(parts)


def write_fmap(stack: FeatureStack, path) -> None:
    if not isinstance(stack, FeatureStack):
        stack = FeatureStack(list(stack))
    blob = fmap_bytes(stack)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# --- PGM export -------------------------------------------------------------

def _pgm_bytes(payload: np.ndarray, height: int, width: int) -> bytes:
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return header + payload.astype(np.uint8).tobytes()


def write_labelmap_pgm(label_map: LabelMap, path) -> None:
    """Store label k as byte k. Requires fewer than 257 components."""
    if label_map.labels.size and label_map.labels.max() > 255:
        raise TooManyComponents(
            f"PGM label export supports at most 256 components, "
            f"got label {int(label_map.labels.max())}"
        )
    blob = _pgm_bytes(label_map.labels, label_map.height, label_map.width)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_probmap_pgm(probs: np.ndarray, path) -> None:
    """Export one component's probability map as round(255*p)."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise DimensionMismatch(f"probability map must be 2-d, got {probs.shape}")
    scaled = np.rint(np.clip(probs, 0.0, 1.0) * 255.0)
    blob = _pgm_bytes(scaled, probs.shape[0], probs.shape[1])
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM written by this module (or any maxval<=255 P5)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not blob.startswith(b"P5"):
        raise BadMagic(f"{path} is not a binary PGM")
    # three whitespace-separated header tokens after P5: width, height, maxval
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedPayload(f"{path}: PGM header ends early")
        tokens.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = tokens
    if maxval > 255:
        raise TooManyComponents(f"{path}: 16-bit PGM not supported")
    expected = width * height
    data = blob[pos : pos + expected]
    if len(data) != expected:
        raise TruncatedPayload(
            f"{path}: payload has {len(data)} bytes, expected {expected}"
        )
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width).copy()


def read_labelmap_pgm(path) -> LabelMap:
    arr = read_pgm(path).astype(np.int64)
    return LabelMap(arr.shape[0], arr.shape[1], arr)
