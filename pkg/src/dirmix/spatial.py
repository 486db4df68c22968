"""Spatial operators on per-pixel probability maps.

Gaussian smoothing kernels, reflect-padded separable convolution, the local
mean/variance statistics of posterior maps, and the two resampling schemes
used to move maps between layer lattices (nearest-neighbor up, average-pool
down). All operators preserve per-pixel simplex structure when fed simplex
fields and keep a fixed summation order so results are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, GrowRequested, NonPositiveSigma, ShrinkRequested

VARIANCE_FLOOR = 1e-8


@dataclass(frozen=True)
class GaussianKernel:
    """Separable discrete Gaussian; taps exp(-i^2/(2*sigma^2)), |i| <= ceil(3*sigma)."""

    sigma: float
    taps: np.ndarray

    @classmethod
    def from_sigma(cls, sigma: float) -> "GaussianKernel":
        if not sigma > 0:
            raise NonPositiveSigma(f"kernel width must be > 0, got {sigma}")
        radius = math.ceil(3.0 * sigma)
        offsets = np.arange(-radius, radius + 1, dtype=np.float64)
        taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
        taps /= taps.sum()
        return cls(float(sigma), taps)

    @property
    def radius(self) -> int:
        return (len(self.taps) - 1) // 2

    @property
    def self_overlap(self) -> float:
        """2-d self-convolution at the origin: sum of squared 2-d taps."""
        one_d = float(np.dot(self.taps, self.taps))
        return one_d * one_d

    def weights_2d(self) -> np.ndarray:
        return np.outer(self.taps, self.taps)


def _convolve_axis(field: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """Correlate one axis with symmetric taps under reflect padding.

    Axes of length 1 pass through unchanged (a normalized kernel acts as the
    identity on a constant axis).
    """
    n = field.shape[axis]
    if n == 1:
        return field.astype(np.float64, copy=True)
    radius = (len(taps) - 1) // 2
    pad = [(0, 0)] * field.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(field, pad, mode="reflect")
    out = np.zeros(field.shape, dtype=np.float64)
    index = [slice(None)] * field.ndim
    for i, w in enumerate(taps):  # ascending tap order: reproducible sums
        index[axis] = slice(i, i + n)
        out += w * padded[tuple(index)]
    return out


def convolve2d_reflect(field: np.ndarray, kernel: GaussianKernel) -> np.ndarray:
    """Separable 2-d convolution of (H, W) or (H, W, K) fields."""
    field = np.asarray(field, dtype=np.float64)
    out = _convolve_axis(field, kernel.taps, axis=0)
    return _convolve_axis(out, kernel.taps, axis=1)


def local_mean(tau_maps: np.ndarray, kernel: GaussianKernel) -> np.ndarray:
    """Kernel-smoothed posterior maps m = G * tau_k, per component.

    tau_maps: (H, W, K) simplex-valued per pixel; the output is too (the
    kernel sums to 1 in each axis).
    """
    return convolve2d_reflect(tau_maps, kernel)


def local_variance(
    tau_maps: np.ndarray,
    means: np.ndarray,
    kernel: GaussianKernel,
    floor: float = VARIANCE_FLOOR,
) -> np.ndarray:
    """Per-pixel variance of the posterior maps under the smoothing kernel.

    s^2 = sum_k [ G * tau_k^2 - m_k^2 ] / (K * (1 - G*G(0))), floored at
    ``floor``; G*G(0) is the 2-d kernel self-overlap. Constant fields hit the
    floor exactly (the numerator vanishes).
    """
    tau_maps = np.asarray(tau_maps, dtype=np.float64)
    n_components = tau_maps.shape[2]
    smoothed_sq = convolve2d_reflect(tau_maps**2, kernel)
    numer = np.sum(smoothed_sq - np.asarray(means, dtype=np.float64) ** 2, axis=2)
    denom = n_components * (1.0 - kernel.self_overlap)
    return np.maximum(numer / denom, floor)


# --- lattice resampling -----------------------------------------------------

def _nn_index(n_dst: int, n_src: int) -> np.ndarray:
    # floor(target index * src/dst), exact in integer arithmetic
    return (np.arange(n_dst) * n_src) // n_dst


def resample_nn_up(maps: np.ndarray, target_grid: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor upsampling of (H, W) or (H, W, K) maps.

    Centers align by the floor convention: source index =
    floor(target index * src/dst). Values are copied, so simplex structure
    is preserved exactly.
    """
    maps = np.asarray(maps)
    src_h, src_w = maps.shape[:2]
    dst_h, dst_w = target_grid
    if dst_h < src_h or dst_w < src_w:
        raise ShrinkRequested(
            f"nearest-neighbor upsampling cannot shrink "
            f"({src_h}x{src_w} -> {dst_h}x{dst_w})"
        )
    rows = _nn_index(dst_h, src_h)
    cols = _nn_index(dst_w, src_w)
    out = maps[np.ix_(rows, cols)]
    if out.dtype.kind == "f":
        out = out.astype(np.float64)
    return out.copy()


def _pool_matrix(n_dst: int, n_src: int) -> np.ndarray:
    """Row-stochastic averaging matrix for one axis (n_dst <= n_src).

    Integer ratios give exact block means; otherwise each output cell
    averages source cells weighted by interval overlap.
    """
    ratio = n_src / n_dst
    weights = np.zeros((n_dst, n_src), dtype=np.float64)
    for t in range(n_dst):
        lo = t * ratio
        hi = (t + 1) * ratio
        s0 = int(math.floor(lo))
        s1 = min(int(math.ceil(hi)), n_src)
        for s in range(s0, s1):
            overlap = min(hi, s + 1) - max(lo, s)
            if overlap > 0:
                weights[t, s] = overlap / ratio
    return weights


def resample_avg_down(maps: np.ndarray, target_grid: tuple[int, int]) -> np.ndarray:
    """Average-pool (H, W) or (H, W, K) maps onto a coarser grid.

    Block means for integer ratios, area-weighted means otherwise; rows of
    the pooling operator sum to 1, so simplex fields stay on the simplex.
    A block of identical values pools to exactly that value, which makes
    pooling the exact inverse of nearest-neighbor upsampling.
    """
    maps = np.asarray(maps, dtype=np.float64)
    src_h, src_w = maps.shape[:2]
    dst_h, dst_w = target_grid
    if dst_h > src_h or dst_w > src_w:
        raise GrowRequested(
            f"average pooling cannot enlarge "
            f"({src_h}x{src_w} -> {dst_h}x{dst_w})"
        )
    if (dst_h, dst_w) == (src_h, src_w):
        return maps.copy()
    if src_h % dst_h == 0 and src_w % dst_w == 0:
        bh, bw = src_h // dst_h, src_w // dst_w
        blocks = maps.reshape(dst_h, bh, dst_w, bw, *maps.shape[2:])
        out = blocks.mean(axis=(1, 3))
        lo = blocks.min(axis=(1, 3))
        hi = blocks.max(axis=(1, 3))
        return np.where(lo == hi, lo, out)
    row_op = _pool_matrix(dst_h, src_h)
    col_op = _pool_matrix(dst_w, src_w)
    out = np.tensordot(row_op, maps, axes=(1, 0))  # (dst_h, src_w, ...)
    out = np.tensordot(col_op, out, axes=(1, 1))   # (dst_w, dst_h, ...)
    return np.swapaxes(out, 0, 1).copy()


def resample_to(maps: np.ndarray, target_grid: tuple[int, int]) -> np.ndarray:
    """Move maps to another lattice: NN up when growing, average-pool down."""
    src = tuple(np.asarray(maps).shape[:2])
    dst = tuple(target_grid)
    if dst == src:
        return np.asarray(maps, dtype=np.float64).copy()
    if dst[0] >= src[0] and dst[1] >= src[1]:
        return resample_nn_up(maps, dst)
    if dst[0] <= src[0] and dst[1] <= src[1]:
        return resample_avg_down(maps, dst)
    raise DimensionMismatch(
        f"cannot resample {src} -> {dst}: axes disagree on direction"
    )


def resample_labels_nn(labels: np.ndarray, target_grid: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor label resampling (either direction), floor convention."""
    labels = np.asarray(labels)
    rows = _nn_index(target_grid[0], labels.shape[0])
    cols = _nn_index(target_grid[1], labels.shape[1])
    return labels[np.ix_(rows, cols)].copy()
