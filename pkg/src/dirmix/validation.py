"""Input validation helpers shared across the package.

These mirror the sklearn ``check_*`` idiom: each helper either returns a
normalized ``float64`` array or raises a classified error.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NonFiniteValue

SIMPLEX_ATOL = 1e-9


def as_float_matrix(x, name="X"):
    """Coerce to a 2-d float64 array, rejecting non-finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{name} contains NaN or infinite entries")
    return arr


def check_simplex_rows(p, atol=SIMPLEX_ATOL, name="probabilities"):
    """Verify every row is a point on the simplex: nonnegative, sums to 1."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {p.shape}")
    if np.any(p < -atol):
        raise ValueError(f"{name} has negative entries (min {p.min():.3e})")
    sums = p.sum(axis=1)
    worst = np.max(np.abs(sums - 1.0)) if sums.size else 0.0
    if worst > atol:
        raise ValueError(f"{name} rows must sum to 1 (worst deviation {worst:.3e})")
    return p


def simplex_row_deviation(p):
    """Largest |row sum - 1| over the matrix; diagnostics for fit traces."""
    sums = np.asarray(p, dtype=np.float64).sum(axis=1)
    return float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0


def check_same_grid(a_shape, b_shape):
    if tuple(a_shape) != tuple(b_shape):
        raise DimensionMismatch(f"grids differ: {tuple(a_shape)} vs {tuple(b_shape)}")


def check_labels(labels, n_components, name="labels"):
    """Labels must be integers in [0, n_components)."""
    arr = np.asarray(labels)
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"{name} must be integer-typed, got {arr.dtype}")
    if arr.size and (arr.min() < 0 or arr.max() >= n_components):
        raise ValueError(
            f"{name} out of range [0, {n_components}): "
            f"min {arr.min()}, max {arr.max()}"
        )
    return arr
