"""Deterministic k-means with k-means++ seeding.

Kept in-house rather than delegated so that fits are reproducible bit-for-bit
from a single RNG seed regardless of BLAS threading: all reductions run in
ascending sample order.
"""

from __future__ import annotations

import numpy as np

from .validation import as_float_matrix


def _sq_distances(X, centers):
    # (N, K) squared Euclidean distances
    return ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def kmeans_plus_plus(X: np.ndarray, n_clusters: int, rng: np.random.Generator):
    """D^2-weighted seeding; returns (n_clusters, d) initial centers."""
    X = as_float_matrix(X)
    n = X.shape[0]
    centers = np.empty((n_clusters, X.shape[1]))
    first = int(rng.integers(n))
    centers[0] = X[first]
    closest = ((X - centers[0]) ** 2).sum(axis=1)
    for k in range(1, n_clusters):
        total = closest.sum()
        if total <= 0:
            # all points coincide with chosen centers; fall back to uniform
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[k] = X[idx]
        closest = np.minimum(closest, ((X - centers[k]) ** 2).sum(axis=1))
    return centers


def kmeans(X: np.ndarray, n_clusters: int, rng: np.random.Generator,
           max_iter: int = 50):
    """Lloyd iterations from k-means++ seeds; returns (labels, centers).

    Ties in assignment break toward the smallest cluster index; an emptied
    cluster is reseeded on the sample farthest from its center.
    """
    X = as_float_matrix(X)
    if n_clusters > X.shape[0]:
        raise ValueError(
            f"need at least n_clusters={n_clusters} samples, got {X.shape[0]}"
        )
    centers = kmeans_plus_plus(X, n_clusters, rng)
    labels = np.zeros(X.shape[0], dtype=np.int64)
    for _ in range(max_iter):
        dist = _sq_distances(X, centers)
        new_labels = np.argmin(dist, axis=1)
        for k in range(n_clusters):
            mask = new_labels == k
            if mask.any():
                centers[k] = X[mask].mean(axis=0)
            else:
                worst = int(np.argmax(dist[np.arange(len(X)), new_labels]))
                centers[k] = X[worst]
                new_labels[worst] = k
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return labels, centers


def one_hot(labels: np.ndarray, n_clusters: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], n_clusters), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out
