"""Segment-guided texture synthesis.

The loss compares, per layer and per segment, the masked mean and covariance
of the seed image's deep features against the bundle's target statistics:

    L(x) = sum_{h <= Hbar} sum_k ||Ave_k_h(x) - M_k_h||^2
                                + ||Cov_k_h(x) - C_k_h||^2

and is minimized over the seed pixels with Adam. Segments with no pixels at
some layer are skipped and logged. Statistics use the same masked-moment
convention as the bundle exporter: biased covariance, 1/|segment|.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from .bundle import SynthesisBundle
from .features import ExtractionSpec, FeatureExtractor, image_to_tensor

logger = logging.getLogger(__name__)


@dataclass
class SynthesisSpec:
    steps: int = 200
    learning_rate: float = 0.05
    layers: int | None = None      # defaults to everything in the bundle
    seed: int = 0
    seed_mode: str = "noise"       # 'noise' or 'target'
    weights: str = "pretrained"
    weights_seed: int = 0
    color_match: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.seed_mode not in ("noise", "target"):
            raise ValueError("seed_mode must be noise|target")


@dataclass
class SynthesisResult:
    image: np.ndarray
    loss_trace: list[float]
    skipped_segments: list[tuple[int, int]]

    @property
    def smoothed_trace(self) -> list[float]:
        return np.minimum.accumulate(self.loss_trace).tolist()


def segment_moments(feature_map: torch.Tensor, mask: np.ndarray):
    """Masked mean and biased covariance of one layer's features.

    feature_map: (1, C, H, W); mask: (H, W) bool with at least one pixel.
    """
    c = feature_map.shape[1]
    flat = feature_map[0].reshape(c, -1)
    index = torch.from_numpy(np.flatnonzero(mask.ravel())).to(flat.device)
    selected = flat[:, index]                      # (C, n)
    mean = selected.mean(dim=1)
    centered = selected - mean[:, None]
    cov = centered @ centered.T / selected.shape[1]
    return mean, cov


def synthesis_loss(maps: list[torch.Tensor], bundle: SynthesisBundle,
                   n_layers: int, skipped: list | None = None):
    """Eq.-style objective over the first n_layers of the bundle."""
    total = None
    for h in range(1, n_layers + 1):
        feature_map = maps[h - 1]
        for k in range(bundle.n_components):
            stats = bundle.stats(h, k)
            if stats.pixels == 0:
                if skipped is not None and (h, k) not in skipped:
                    skipped.append((h, k))
                    logger.info("segment (%d, %d) is empty; term skipped",
                                h, k)
                continue
            mean, cov = segment_moments(feature_map, stats.mask)
            target_mean = torch.as_tensor(stats.mean, dtype=feature_map.dtype)
            target_cov = torch.as_tensor(stats.covariance,
                                         dtype=feature_map.dtype)
            term = ((mean - target_mean) ** 2).sum() \
                + ((cov - target_cov) ** 2).sum()
            total = term if total is None else total + term
    if total is None:
        raise ValueError("every segment is empty; nothing to synthesize")
    return total


def synthesize(bundle: SynthesisBundle, spec: SynthesisSpec,
               image_shape: tuple[int, int],
               target_image: np.ndarray | None = None,
               dtype=torch.float32) -> SynthesisResult:
    """Gradient descent on seed pixels; returns the image and loss trace.

    image_shape is (H, W) of the pixel canvas; it must reproduce the
    bundle's layer grids under VGG-19 arithmetic (the layer-1 grid equals
    the canvas for conv1_1).
    """
    n_layers = spec.layers or bundle.n_layers
    if n_layers > bundle.n_layers:
        raise ValueError(
            f"bundle holds {bundle.n_layers} layers, requested {n_layers}"
        )
    extraction = ExtractionSpec(
        layers=tuple(range(1, n_layers + 1)),
        weights=spec.weights,
        seed=spec.weights_seed,
    )
    extractor = FeatureExtractor(extraction, dtype=dtype)

    generator = torch.Generator().manual_seed(spec.seed)
    if spec.seed_mode == "target":
        if target_image is None:
            raise ValueError("seed_mode='target' needs the target image")
        seed = image_to_tensor(target_image, dtype)
    else:
        seed = torch.rand((1, 3, *image_shape), generator=generator,
                          dtype=dtype)
    pixels = seed.clone().requires_grad_(True)
    optimizer = torch.optim.Adam([pixels], lr=spec.learning_rate)

    trace: list[float] = []
    skipped: list[tuple[int, int]] = []
    for _ in range(spec.steps):
        optimizer.zero_grad()
        maps = extractor(pixels)
        loss = synthesis_loss(maps, bundle, n_layers, skipped)
        loss.backward()
        trace.append(float(loss.detach()))
        optimizer.step()
    with torch.no_grad():
        final = pixels.clamp(0.0, 1.0)[0].permute(1, 2, 0).numpy()
    return SynthesisResult(
        image=final.astype(np.float64),
        loss_trace=trace,
        skipped_segments=skipped,
    )
