"""Scikit-learn style estimators wrapping the functional core.

``DirichletMixture`` fits one layer of samples with the flexible EM engine;
``MultilayerSegmenter`` runs the full coupled pipeline over a feature stack;
``StackPreprocessor`` is the transformer form of the conditioning step. All
three follow the sklearn contract: constructor stores hyperparameters
verbatim, ``fit`` does the work and sets trailing-underscore attributes,
``get_params``/``set_params`` come from BaseEstimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .densities import GaussianDensity, StudentDensity
from .em import EMConfig, run_em
from .fmap import FeatureStack, LayerGrid
from .multilayer import (
    KernelSpec,
    ModelVariant,
    MultilayerConfig,
    extract_labels,
    fit_multilayer,
)
from .preprocess import preprocess_stack
from .rules import make_rule
from .validation import as_float_matrix


def build_density(name, estimate_dof=True, fixed_dof=None):
    if name == "gaussian":
        return GaussianDensity()
    if name == "student":
        return StudentDensity(estimate_dof=estimate_dof, fixed_dof=fixed_dof)
    raise ValueError(f"unknown density family {name!r}")


class DirichletMixture(BaseEstimator):
    """Mixture model whose mixing-probability M-step is a pluggable rule.

    Parameters
    ----------
    n_components : int
        Number of mixture components.
    density : {'gaussian', 'student'}
        Component family.
    update_rule : str or rule object
        'column_sum' recovers the standard mixture; 'identity' ties mixing
        probabilities to the posteriors; 'convolution' / 'smoothing' average
        posteriors spatially (require ``grid``). Any object with the rule
        call signature is accepted as-is.
    grid : (height, width), optional
        Pixel lattice for the spatial rules; samples must be the row-major
        flattening of this grid.
    sigma : float
        Kernel width for the spatial rules.
    max_iter, tol, random_state
        EM loop controls; the fit is deterministic for a fixed seed.
    estimate_dof, fixed_dof
        Student-t degrees-of-freedom handling (ignored for Gaussian).
    """

    def __init__(self, n_components=2, density="gaussian",
                 update_rule="column_sum", grid=None, sigma=1.5,
                 max_iter=100, tol=1e-6, random_state=0,
                 estimate_dof=True, fixed_dof=None):
        self.n_components = n_components
        self.density = density
        self.update_rule = update_rule
        self.grid = grid
        self.sigma = sigma
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.estimate_dof = estimate_dof
        self.fixed_dof = fixed_dof

    def _build_rule(self):
        if isinstance(self.update_rule, str):
            return make_rule(self.update_rule, grid=self.grid, sigma=self.sigma)
        return self.update_rule

    def fit(self, X, y=None):
        X = as_float_matrix(X)
        density = build_density(self.density, self.estimate_dof, self.fixed_dof)
        config = EMConfig(max_iter=self.max_iter, rel_tol=self.tol,
                          rng_seed=self.random_state)
        result = run_em(density, X, self.n_components, self._build_rule(),
                        config)
        self.result_ = result
        self.mixing_probs_ = result.mixing
        self.responsibilities_ = result.responsibilities
        self.labels_ = result.labels
        self.log_posterior_trace_ = list(result.log_posterior_trace)
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        params = result.params
        self.means_ = params.means
        if self.density == "student":
            self.scales_ = params.scales
            self.dofs_ = params.dofs
        else:
            self.covariances_ = params.covariances
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_


class StackPreprocessor(BaseEstimator):
    """Layer-1 augmentation followed by per-layer PCA, as a transformer."""

    def __init__(self, variance_threshold=0.90):
        self.variance_threshold = variance_threshold

    def fit(self, stack, y=None):
        self.fit_transform(stack)
        return self

    def fit_transform(self, stack, y=None):
        stack = _as_stack(stack)
        data, models = preprocess_stack(stack, self.variance_threshold)
        self.models_ = models
        self.retained_dims_ = [m.retained for m in models]
        return data


def _as_stack(stack) -> FeatureStack:
    if isinstance(stack, FeatureStack):
        return stack
    return FeatureStack([
        layer if isinstance(layer, LayerGrid) else LayerGrid.from_array(layer)
        for layer in stack
    ])


class MultilayerSegmenter(BaseEstimator):
    """Unsupervised multilayer segmentation over a deep-feature stack.

    Fits K components at every layer, coupling segmentations across layers
    per ``variant``: 'a' (independent), 'b' (one shared map) or 'c'
    (chain-coupled neighbors).
    """

    def __init__(self, n_components=2, variant="a", density="gaussian",
                 sigmas=None, n_iter=20, random_state=0,
                 preprocess=True, variance_threshold=0.90,
                 estimate_dof=True, fixed_dof=None):
        self.n_components = n_components
        self.variant = variant
        self.density = density
        self.sigmas = sigmas
        self.n_iter = n_iter
        self.random_state = random_state
        self.preprocess = preprocess
        self.variance_threshold = variance_threshold
        self.estimate_dof = estimate_dof
        self.fixed_dof = fixed_dof

    def fit(self, stack, y=None):
        variant = ModelVariant.from_string(self.variant)
        if self.preprocess:
            data = StackPreprocessor(self.variance_threshold).fit_transform(
                _as_stack(stack)
            )
        elif isinstance(stack, FeatureStack):
            data = [(layer.pixels(), layer.grid) for layer in stack]
        else:
            data = stack
        n_layers = len(data)
        spec = (KernelSpec.from_sigmas(self.sigmas) if self.sigmas is not None
                else KernelSpec.default(variant, n_layers))
        density = build_density(self.density, self.estimate_dof, self.fixed_dof)
        config = MultilayerConfig(n_iter=self.n_iter,
                                  rng_seed=self.random_state)
        self.state_ = fit_multilayer(
            data, self.n_components, variant, density, spec, config
        )
        self.n_layers_ = n_layers
        self.traces_ = self.state_.traces
        return self

    def labels(self, layer: int):
        """LabelMap of the given 1-indexed layer."""
        check_is_fitted(self, "state_")
        return extract_labels(self.state_, layer)

    def mixing_probs(self, layer: int) -> np.ndarray:
        check_is_fitted(self, "state_")
        return self.state_.mixing[layer - 1]

    def fit_predict(self, stack, y=None, layer: int = 1):
        self.fit(stack)
        return self.labels(layer).labels.ravel()
