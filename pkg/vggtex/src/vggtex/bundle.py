"""Reader for the segmentation backend's synthesis bundle.

A bundle directory holds ``bundle.json`` plus, per (layer, component), a
pixel-mask PGM and an FSTA statistics block::

    magic 'FSTA\\x00\\x00\\x00\\x01' | layer u32 | component u32 | d u32
    | pixel count u64 | mean f64[d] | covariance f64[d*d] row-major
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

STATS_MAGIC = b"FSTA\x00\x00\x00\x01"


class BundleError(ValueError):
    pass


@dataclass
class SegmentStats:
    layer: int
    component: int
    pixels: int
    mean: np.ndarray
    covariance: np.ndarray
    mask: np.ndarray  # (H, W) bool


@dataclass
class SynthesisBundle:
    directory: Path
    n_components: int
    n_layers: int
    source_fmap: str
    grids: list[tuple[int, int]]
    segments: dict  # (layer, component) -> SegmentStats

    def stats(self, layer: int, component: int) -> SegmentStats:
        return self.segments[(layer, component)]


def _read_pgm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if not blob.startswith(b"P5"):
        raise BundleError(f"{path} is not a binary PGM")
    tokens, pos = [], 2
    while len(tokens) < 3:
        while blob[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        tokens.append(int(blob[start:pos]))
    pos += 1
    width, height, _ = tokens
    data = np.frombuffer(blob, np.uint8, width * height, pos)
    return data.reshape(height, width).copy()


def _read_stats(path):
    blob = Path(path).read_bytes()
    if blob[: len(STATS_MAGIC)] != STATS_MAGIC:
        raise BundleError(f"{path} is not an FSTA block")
    pos = len(STATS_MAGIC)
    layer, component, d, count = struct.unpack_from("<IIIQ", blob, pos)
    pos += struct.calcsize("<IIIQ")
    mean = np.frombuffer(blob, "<f8", d, pos).copy()
    pos += 8 * d
    cov = np.frombuffer(blob, "<f8", d * d, pos).reshape(d, d).copy()
    return layer, component, count, mean, cov


def load_bundle(directory) -> SynthesisBundle:
    directory = Path(directory)
    with open(directory / "bundle.json") as fh:
        manifest = json.load(fh)
    mask_on = int(manifest.get("mask_value", 255))
    segments = {}
    for entry in manifest["entries"]:
        layer, component = entry["layer"], entry["component"]
        mask = _read_pgm(directory / entry["mask"]) == mask_on
        s_layer, s_comp, count, mean, cov = _read_stats(
            directory / entry["stats"]
        )
        if (s_layer, s_comp) != (layer, component):
            raise BundleError(
                f"stats block {entry['stats']} is tagged "
                f"({s_layer}, {s_comp}), manifest says ({layer}, {component})"
            )
        if count != int(mask.sum()):
            raise BundleError(
                f"segment ({layer}, {component}): mask has {int(mask.sum())} "
                f"pixels, stats block says {count}"
            )
        segments[(layer, component)] = SegmentStats(
            layer, component, count, mean, cov, mask
        )
    return SynthesisBundle(
        directory=directory,
        n_components=int(manifest["n_components"]),
        n_layers=int(manifest["layers"]),
        source_fmap=manifest.get("source_fmap", ""),
        grids=[tuple(g) for g in manifest["grids"]],
        segments=segments,
    )
