"""Feature conditioning ahead of fitting.

Two steps, in this order: every layer below the first gets the (average
pooled) layer-1 features appended to its channels, then each layer is
reduced independently with PCA keeping the smallest dimension that explains
the requested variance fraction (default 90%). No whitening: projected
coordinates keep their eigenvalue-scaled variances. Projections are returned
in float64; the 32-bit container format applies to storage only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChannelMismatch
from .fmap import FeatureStack, LayerGrid
from .spatial import resample_avg_down

DEFAULT_VARIANCE_THRESHOLD = 0.90
_DEGENERATE_TOTAL = 1e-30


@dataclass
class PcaModel:
    """Centering vector, orthonormal projection (d, r) and variance ratios."""

    mean: np.ndarray
    projection: np.ndarray
    retained: int
    explained_variance_ratios: np.ndarray

    @property
    def n_features(self):
        return self.mean.shape[0]


def _layer_matrix(layer) -> tuple[np.ndarray, tuple[int, int]]:
    if isinstance(layer, LayerGrid):
        return layer.pixels(), layer.grid
    arr = np.asarray(layer, dtype=np.float64)
    if arr.ndim == 3:
        return arr.reshape(-1, arr.shape[2]), (arr.shape[0], arr.shape[1])
    return arr, (arr.shape[0], 1)


def pca_fit(layer, variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD) -> PcaModel:
    """Center, eigendecompose the biased covariance, keep the smallest r
    whose cumulative explained variance reaches the threshold.

    Wide layers (more channels than pixels) go through the dual (Gram)
    eigenproblem. Sign convention: each component's largest-magnitude entry
    is positive. All-constant features degenerate to a single arbitrary
    direction explaining everything.
    """
    if not 0.0 < variance_threshold <= 1.0:
        raise ValueError(f"variance threshold must be in (0, 1], got "
                         f"{variance_threshold}")
    X, _ = _layer_matrix(layer)
    n, d = X.shape
    mean = X.mean(axis=0)
    centered = X - mean

    if n >= d:
        cov = centered.T @ centered / n
        eigvals, eigvecs = np.linalg.eigh(cov)
    else:
        gram = centered @ centered.T / n
        gvals, gvecs = np.linalg.eigh(gram)
        keep = gvals > _DEGENERATE_TOTAL
        basis = centered.T @ gvecs[:, keep]
        norms = np.linalg.norm(basis, axis=0)
        norms[norms == 0] = 1.0
        eigvecs = np.zeros((d, d))
        eigvecs[:, : keep.sum()] = basis / norms
        eigvals = np.zeros(d)
        eigvals[: keep.sum()] = gvals[keep]
        order = np.argsort(eigvals)  # match eigh's ascending convention
        eigvals, eigvecs = eigvals[order], eigvecs[:, order]

    eigvals = np.clip(eigvals[::-1], 0.0, None)          # descending
    eigvecs = eigvecs[:, ::-1]
    total = eigvals.sum()
    if total <= _DEGENERATE_TOTAL:
        ratios = np.zeros(d)
        ratios[0] = 1.0
        projection = np.zeros((d, 1))
        projection[0, 0] = 1.0
        return PcaModel(mean, projection, 1, ratios)

    ratios = eigvals / total
    cumulative = np.cumsum(ratios)
    retained = int(np.searchsorted(cumulative, variance_threshold - 1e-12) + 1)
    retained = min(retained, d)
    projection = eigvecs[:, :retained].copy()
    for j in range(retained):
        pivot = int(np.argmax(np.abs(projection[:, j])))
        if projection[pivot, j] < 0:
            projection[:, j] = -projection[:, j]
    return PcaModel(mean, projection, retained, ratios)


def pca_transform(model: PcaModel, layer) -> np.ndarray:
    """Project pixels onto the retained components.

    Accepts a LayerGrid or an (N, d) / (H, W, d) array; returns float64 with
    the channel axis reduced to ``model.retained`` (grids keep their shape).
    """
    X, grid = _layer_matrix(layer)
    if X.shape[1] != model.n_features:
        raise ChannelMismatch(
            f"layer has {X.shape[1]} channels, model was fit on "
            f"{model.n_features}"
        )
    projected = (X - model.mean) @ model.projection
    if isinstance(layer, LayerGrid) or np.asarray(layer).ndim == 3:
        return projected.reshape(grid[0], grid[1], model.retained)
    return projected


def pca_reconstruct(model: PcaModel, projected) -> np.ndarray:
    """Back-projection via the transpose (orthonormal columns)."""
    projected = np.asarray(projected, dtype=np.float64)
    flat = projected.reshape(-1, model.retained)
    return flat @ model.projection.T + model.mean


def augment_with_layer1(stack: FeatureStack) -> FeatureStack:
    """Append average-pooled layer-1 channels to every deeper layer."""
    if stack.n_layers == 1:
        return stack
    base = stack[0].values.astype(np.float64)
    layers = [stack[0]]
    for layer in stack.layers[1:]:
        pooled = resample_avg_down(base, layer.grid)
        merged = np.concatenate(
            [layer.values.astype(np.float64), pooled], axis=2
        )
        layers.append(LayerGrid.from_array(merged.astype(np.float32)))
    return FeatureStack(layers)


def preprocess_stack(stack: FeatureStack,
                     variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD):
    """Full conditioning pipeline: augment, then per-layer PCA.

    Returns (per-layer list of ((N, r) float64 pixels, grid), fitted
    PcaModels). Deterministic: no randomness anywhere in the pipeline.
    """
    augmented = augment_with_layer1(stack)
    data, models = [], []
    for layer in augmented:
        model = pca_fit(layer, variance_threshold)
        projected = pca_transform(model, layer)
        data.append((projected.reshape(-1, model.retained), layer.grid))
        models.append(model)
    return data, models
