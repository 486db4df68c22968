"""Color correction by sliced quantile matching.

Pixels of the synthesized image are repeatedly projected onto random RGB
directions; along each direction the projected values are replaced by the
target's values of equal rank, and the pixel cloud moves by the average of
the per-slice corrections. The sliced distance to the target's color
distribution (measured on held-out directions) shrinks as iterations
proceed.
"""

from __future__ import annotations

import numpy as np

DEFAULT_ITERATIONS = 32
DEFAULT_SLICES = 8


def _unit_directions(rng, count):
    vecs = rng.standard_normal((count, 3))
    return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)


def sliced_distance(a: np.ndarray, b: np.ndarray, directions) -> float:
    """Mean squared 1-d quantile distance over the given directions."""
    total = 0.0
    for direction in directions:
        pa = np.sort(a @ direction)
        pb = np.sort(b @ direction)
        total += float(np.mean((pa - pb) ** 2))
    return total / len(directions)


def color_match(synth: np.ndarray, target: np.ndarray,
                iterations: int = DEFAULT_ITERATIONS,
                slices: int = DEFAULT_SLICES,
                seed: int = 0,
                track: bool = False):
    """Match the synth image's color cloud to the target's.

    Both images are (H, W, 3) in [0, 1] with identical dimensions. Returns
    the corrected image, or (image, held-out distance trace) when ``track``
    is set; the trace has iterations + 1 entries, starting at the input.
    """
    synth = np.asarray(synth, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if synth.shape != target.shape:
        raise ValueError(
            f"image shapes differ: {synth.shape} vs {target.shape}"
        )
    shape = synth.shape
    moving = synth.reshape(-1, 3).copy()
    frozen = target.reshape(-1, 3)
    rng = np.random.default_rng(seed)
    held_out = _unit_directions(np.random.default_rng(seed + 1), 64)
    trace = [sliced_distance(moving, frozen, held_out)] if track else None

    for _ in range(iterations):
        directions = _unit_directions(rng, slices)
        correction = np.zeros_like(moving)
        for direction in directions:
            projected = moving @ direction
            order = np.argsort(projected, kind="stable")
            target_sorted = np.sort(frozen @ direction)
            delta = np.empty_like(projected)
            delta[order] = target_sorted - projected[order]
            correction += delta[:, None] * direction[None, :]
        moving += correction / slices
        if track:
            trace.append(sliced_distance(moving, frozen, held_out))

    out = np.clip(moving.reshape(shape), 0.0, 1.0)
    if track:
        return out, trace
    return out
