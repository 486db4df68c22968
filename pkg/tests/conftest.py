import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240902)


def random_simplex(rng, n, k):
    """Strictly positive rows on the simplex."""
    return rng.dirichlet(np.ones(k), size=n)


def random_simplex_maps(rng, h, w, k):
    return rng.dirichlet(np.ones(k), size=(h, w))


def two_blob_data(rng, n_per=100, separation=10.0, d=1):
    """Two well-separated Gaussian clusters + ground-truth labels."""
    a = rng.standard_normal((n_per, d))
    b = rng.standard_normal((n_per, d)) + separation
    X = np.vstack([a, b])
    truth = np.repeat([0, 1], n_per)
    order = rng.permutation(len(X))
    return X[order], truth[order]
