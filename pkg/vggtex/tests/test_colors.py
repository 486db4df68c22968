import numpy as np

from conftest import two_tone_image
from vggtex.colors import color_match, sliced_distance, _unit_directions


def test_identity_when_target_equals_synth(rng):
    image = two_tone_image(rng)
    out = color_match(image.astype(np.float64), image.astype(np.float64))
    assert np.max(np.abs(out - image)) < 1e-6


def test_grayscale_target_channel_means(rng):
    gray = np.repeat(rng.random((12, 12, 1)), 3, axis=2)
    colorful = two_tone_image(rng, side=12).astype(np.float64)
    out = color_match(colorful, gray)
    for channel in range(3):
        gap = abs(out[:, :, channel].mean() - gray[:, :, channel].mean())
        assert gap < 2.0 / 255.0, f"channel {channel} mean off by {gap}"


def test_held_out_sliced_distance_decreases(rng):
    synth = rng.random((14, 14, 3))
    target = np.clip(rng.random((14, 14, 3)) * 0.5 + 0.4, 0, 1)
    out, trace = color_match(synth, target, track=True, seed=3)
    assert len(trace) == 32 + 1
    assert trace[-1] < 0.05 * trace[0]
    # monotone within a small tolerance for the stochastic slices
    assert all(b <= a + 1e-9 + 0.02 * trace[0] for a, b in zip(trace, trace[1:]))
    drops = sum(b < a for a, b in zip(trace, trace[1:]))
    assert drops >= 30


def test_distance_measure_zero_on_identical(rng):
    cloud = rng.random((50, 3))
    dirs = _unit_directions(np.random.default_rng(0), 16)
    assert sliced_distance(cloud, cloud, dirs) == 0.0


def test_shape_mismatch_rejected(rng):
    a = rng.random((4, 4, 3))
    b = rng.random((5, 4, 3))
    try:
        color_match(a, b)
    except ValueError:
        pass
    else:
        raise AssertionError("shape mismatch must raise")
