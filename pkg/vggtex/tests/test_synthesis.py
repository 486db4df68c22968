import numpy as np
import pytest
import torch

from conftest import build_bundle_from_image, two_tone_image
from vggtex.bundle import SegmentStats
from vggtex.features import ExtractionSpec, FeatureExtractor, image_to_tensor
from vggtex.synthesis import SynthesisSpec, synthesis_loss, synthesize


def test_loss_zero_when_seed_is_target(rng):
    image = two_tone_image(rng, side=16)
    bundle = build_bundle_from_image(image, n_layers=2)
    extractor = FeatureExtractor(
        ExtractionSpec(layers=(1, 2), weights="random", seed=0),
        dtype=torch.float64,
    )
    maps = extractor(image_to_tensor(image, torch.float64))
    loss = synthesis_loss(maps, bundle, 2)
    assert float(loss) < 1e-6


def test_gradient_matches_central_differences(rng):
    image = two_tone_image(rng, side=16)
    bundle = build_bundle_from_image(image, n_layers=2)
    extractor = FeatureExtractor(
        ExtractionSpec(layers=(1, 2), weights="random", seed=0),
        dtype=torch.float64,
    )
    seed = torch.rand((1, 3, 16, 16), dtype=torch.float64,
                      generator=torch.Generator().manual_seed(3))
    pixels = seed.clone().requires_grad_(True)
    loss = synthesis_loss(extractor(pixels), bundle, 2)
    loss.backward()
    analytic = pixels.grad.clone()

    def loss_at(tensor):
        with torch.no_grad():
            return float(synthesis_loss(extractor(tensor), bundle, 2))

    # float64 step small enough that no ReLU kink sits inside the stencil
    eps = 1e-6
    picks = [(int(c), int(i), int(j))
             for c, i, j in zip(rng.integers(0, 3, 10),
                                rng.integers(0, 16, 10),
                                rng.integers(0, 16, 10))]
    for c, i, j in picks:
        plus = seed.clone()
        plus[0, c, i, j] += eps
        minus = seed.clone()
        minus[0, c, i, j] -= eps
        numeric = (loss_at(plus) - loss_at(minus)) / (2 * eps)
        reference = float(analytic[0, c, i, j])
        scale = max(abs(reference), abs(numeric), 1e-8)
        assert abs(numeric - reference) / scale < 1e-3, (c, i, j)


def test_loss_decreases_over_steps(rng):
    image = two_tone_image(rng, side=16)
    bundle = build_bundle_from_image(image, n_layers=2,
                                     dtype=torch.float32)
    spec = SynthesisSpec(steps=200, learning_rate=0.05, seed=1,
                         weights="random", weights_seed=0,
                         color_match=False)
    result = synthesize(bundle, spec, (16, 16))
    assert len(result.loss_trace) == 200
    assert result.loss_trace[-1] < result.loss_trace[0]
    smoothed = result.smoothed_trace
    assert all(b <= a for a, b in zip(smoothed, smoothed[1:]))
    assert smoothed[-1] < smoothed[0]


def test_seed_mode_target_starts_at_zero_loss(rng):
    image = two_tone_image(rng, side=16)
    bundle = build_bundle_from_image(image, n_layers=2,
                                     dtype=torch.float32)
    spec = SynthesisSpec(steps=1, seed_mode="target", weights="random",
                         weights_seed=0, color_match=False)
    result = synthesize(bundle, spec, (16, 16), target_image=image)
    assert result.loss_trace[0] < 1e-6


def test_empty_segment_skipped_and_logged(rng):
    image = two_tone_image(rng, side=16)
    bundle = build_bundle_from_image(image, n_layers=1,
                                     dtype=torch.float32)
    empty_mask = np.zeros_like(bundle.stats(1, 0).mask)
    bundle.segments[(1, 0)] = SegmentStats(
        layer=1, component=0, pixels=0,
        mean=bundle.stats(1, 0).mean * 0,
        covariance=bundle.stats(1, 0).covariance * 0,
        mask=empty_mask,
    )
    spec = SynthesisSpec(steps=3, weights="random", weights_seed=0,
                         color_match=False)
    result = synthesize(bundle, spec, (16, 16))
    assert result.skipped_segments == [(1, 0)]


def test_all_segments_empty_rejected(rng):
    image = two_tone_image(rng, side=8)
    bundle = build_bundle_from_image(image, n_layers=1,
                                     dtype=torch.float32)
    for key, stats in list(bundle.segments.items()):
        bundle.segments[key] = SegmentStats(
            layer=stats.layer, component=stats.component, pixels=0,
            mean=stats.mean, covariance=stats.covariance,
            mask=np.zeros_like(stats.mask),
        )
    with pytest.raises(ValueError):
        synthesize(bundle, SynthesisSpec(steps=1, weights="random",
                                         color_match=False), (8, 8))


def test_spec_validation():
    with pytest.raises(ValueError):
        SynthesisSpec(steps=0)
    with pytest.raises(ValueError):
        SynthesisSpec(seed_mode="bogus")
