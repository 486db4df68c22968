"""Mixing-probability update rules.

A rule maps the (N, K) responsibility matrix to an (N, K) matrix of
nonnegative weights; row-normalizing those weights (see
``dirmix.em.apply_update_rule``) yields the next mixing probabilities.
Column k of the output depends only on column k of the input, and every rule
here is linear and nonnegativity-preserving, which is exactly the family the
Dirichlet-prior construction can realize.

``SpatialSmoothingRule`` is the one adaptive member: each application
freezes the local-variance weights from its input before acting linearly,
matching how the fitting loop treats per-iteration uncertainty.
"""

from __future__ import annotations

import numpy as np

from .spatial import GaussianKernel, convolve2d_reflect, local_mean, local_variance


class UpdateRule:
    """Base class; subclasses implement ``weights``."""

    linear = True

    def weights(self, tau: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, tau: np.ndarray) -> np.ndarray:
        return self.weights(np.asarray(tau, dtype=np.float64))


class ColumnSumRule(UpdateRule):
    """f_{n,k} = sum_m tau_{m,k}: recovers the standard mixture M-step."""

    def weights(self, tau):
        col = tau.sum(axis=0)
        return np.broadcast_to(col, tau.shape).copy()


class IdentityRule(UpdateRule):
    """f_{n,k} = tau_{n,k}: mixing probabilities equal the posteriors."""

    def weights(self, tau):
        return tau.copy()


class ConvolutionRule(UpdateRule):
    """f_{.,k} = G * tau_{.,k} on a pixel grid: local posterior averaging."""

    def __init__(self, kernel: GaussianKernel, grid: tuple[int, int]):
        self.kernel = kernel
        self.grid = tuple(grid)

    def weights(self, tau):
        h, w = self.grid
        maps = tau.reshape(h, w, tau.shape[1])
        return convolve2d_reflect(maps, self.kernel).reshape(tau.shape)


class PrecisionWeightedRule(UpdateRule):
    """f = tau + (G * tau) / s^2 with a frozen per-pixel variance field.

    This is the single-layer coupling weight family with the uncertainty
    snapshot taken as given; it is linear in its input.
    """

    def __init__(self, kernel: GaussianKernel, grid: tuple[int, int],
                 variance: np.ndarray):
        self.kernel = kernel
        self.grid = tuple(grid)
        self.variance = np.asarray(variance, dtype=np.float64).reshape(grid)

    def weights(self, tau):
        h, w = self.grid
        maps = tau.reshape(h, w, tau.shape[1])
        smoothed = convolve2d_reflect(maps, self.kernel)
        out = maps + smoothed / self.variance[:, :, None]
        return out.reshape(tau.shape)


class SpatialSmoothingRule(UpdateRule):
    """Adaptive single-layer smoothing: weights freeze s^2 from the input.

    Equivalent to applying ``PrecisionWeightedRule`` with the variance field
    computed from the incoming responsibilities; after normalization this
    realizes p = (s^2 * tau + m) / (s^2 + 1).
    """

    linear = False  # linear only conditional on the per-call variance snapshot

    def __init__(self, kernel: GaussianKernel, grid: tuple[int, int]):
        self.kernel = kernel
        self.grid = tuple(grid)

    def freeze(self, tau: np.ndarray) -> PrecisionWeightedRule:
        h, w = self.grid
        maps = np.asarray(tau, dtype=np.float64).reshape(h, w, tau.shape[1])
        means = local_mean(maps, self.kernel)
        variance = local_variance(maps, means, self.kernel)
        return PrecisionWeightedRule(self.kernel, self.grid, variance)

    def weights(self, tau):
        return self.freeze(tau).weights(tau)


def make_rule(name: str, grid=None, sigma: float = 1.5) -> UpdateRule:
    """Rule factory for the CLI/estimator string spellings."""
    if name == "column_sum":
        return ColumnSumRule()
    if name == "identity":
        return IdentityRule()
    if name in ("convolution", "smoothing"):
        if grid is None:
            raise ValueError(f"rule {name!r} needs the pixel grid")
        kernel = GaussianKernel.from_sigma(sigma)
        if name == "convolution":
            return ConvolutionRule(kernel, grid)
        return SpatialSmoothingRule(kernel, grid)
    raise ValueError(f"unknown update rule {name!r}")
