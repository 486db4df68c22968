"""Cross-layer coupled mixtures over multi-resolution feature stacks.

Three coupling models share one fitting loop:

* ``a`` - independent layers; each layer smooths its own posteriors and
  combines single-pixel and local evidence, p = (s^2 tau + m) / (s^2 + 1).
* ``b`` - one shared probability map on the finest (layer-1) lattice,
  the precision-weighted average of every layer's local evidence.
* ``c`` - chain coupling; each layer averages local evidence from itself
  and its two neighbors, weighted by the inverse local variances.

All three are instances of the same normalized-weight update: the closed
forms here floor their weight fields at 1e-12 and row-normalize, exactly like
the generic rule engine, so the specialized and generic paths agree to
machine-level precision.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import logsumexp

from .em import WEIGHT_FLOOR, m_step_with_recovery, hard_assignment_init
from .errors import DegenerateDensity
from .fmap import FeatureStack, LabelMap
from .spatial import (
    GaussianKernel,
    local_mean,
    local_variance,
    resample_labels_nn,
    resample_to,
)
from .validation import simplex_row_deviation

THREADS_ENV = "DIRMIX_THREADS"


class ModelVariant(Enum):
    INDEPENDENT_LAYERS = "a"
    SHARED_MAP = "b"
    CHAIN_COUPLED = "c"

    @classmethod
    def from_string(cls, name) -> "ModelVariant":
        if isinstance(name, cls):
            return name
        return cls(str(name).lower())


# sigma per conv layer, front of the stack first; deep layers continue at 0.75
SIGMA_HEAD_AC = (4.25, 4.25, 3.25, 3.25, 2.25, 2.25, 2.25, 2.25)
SIGMA_HEAD_B = (2.25, 2.25, 1.75, 1.75, 1.25, 1.25, 1.25, 1.25)
SIGMA_TAIL = 0.75


def default_sigmas(variant: ModelVariant, n_layers: int) -> tuple[float, ...]:
    head = SIGMA_HEAD_B if variant is ModelVariant.SHARED_MAP else SIGMA_HEAD_AC
    return tuple(
        head[h] if h < len(head) else SIGMA_TAIL for h in range(n_layers)
    )


@dataclass(frozen=True)
class KernelSpec:
    """Per-layer smoothing widths and their built kernels."""

    sigmas: tuple[float, ...]
    kernels: tuple[GaussianKernel, ...]

    @classmethod
    def from_sigmas(cls, sigmas) -> "KernelSpec":
        sigmas = tuple(float(s) for s in sigmas)
        return cls(sigmas, tuple(GaussianKernel.from_sigma(s) for s in sigmas))

    @classmethod
    def default(cls, variant: ModelVariant, n_layers: int) -> "KernelSpec":
        return cls.from_sigmas(default_sigmas(variant, n_layers))

    def __len__(self):
        return len(self.sigmas)


@dataclass
class MultilayerConfig:
    n_iter: int = 20
    rng_seed: int = 0
    kmeans_iter: int = 50

    def validate(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        return self


@dataclass
class MultilayerState:
    """Fitted per-layer fields plus the shared map for variant b."""

    variant: ModelVariant
    n_components: int
    grids: list[tuple[int, int]]
    mixing: list[np.ndarray]
    params: list
    responsibilities: list[np.ndarray]
    traces: list[list[float]]
    shared_mixing: np.ndarray | None = None
    diagnostics: list = field(default_factory=list)

    @property
    def n_layers(self):
        return len(self.grids)


# --- the three update rules (weight floor + row normalization throughout) ---

def _normalize_weights(weights: np.ndarray) -> np.ndarray:
    weights = np.maximum(weights, WEIGHT_FLOOR)
    return weights / weights.sum(axis=1, keepdims=True)


def update_model_a(tau: np.ndarray, means: np.ndarray,
                   variance: np.ndarray) -> np.ndarray:
    """Single-pixel plus local evidence: p = (s^2 tau + m) / (s^2 + 1)."""
    weights = tau + means / variance[:, None]
    return _normalize_weights(weights)


def update_model_b(means_per_layer, variance_per_layer) -> np.ndarray:
    """Shared map: precision-weighted average of all layers' local means.

    Inputs must already live on the shared (layer-1) lattice.
    """
    weights = model_b_weights(means_per_layer, variance_per_layer)
    return _normalize_weights(weights)


def update_model_c(means_triple, variance_triple) -> np.ndarray:
    """Chain coupling: precision-weighted mean over available neighbors.

    Either neighbor entry may be None (chain boundary); the remaining terms
    renormalize among themselves.
    """
    weights = model_c_weights(means_triple, variance_triple)
    return _normalize_weights(weights)


def model_a_weights(tau, means, variance):
    return tau + means / variance[:, None]


def model_b_weights(means_per_layer, variance_per_layer):
    total = np.zeros_like(means_per_layer[0])
    for m, s2 in zip(means_per_layer, variance_per_layer):
        total += m / s2[:, None]
    return total


def model_c_weights(means_triple, variance_triple):
    total = None
    for m, s2 in zip(means_triple, variance_triple):
        if m is None:
            continue
        term = m / s2[:, None]
        total = term if total is None else total + term
    if total is None:
        raise ValueError("chain update needs at least the layer's own term")
    return total


# --- local statistics on a target lattice -----------------------------------

def stats_on_grid(tau_flat: np.ndarray, src_grid, dst_grid,
                  kernel: GaussianKernel):
    """Resample posteriors to the target lattice, then smooth there.

    Returns (means (N, K), variance (N,)) flattened on the target grid.
    Posterior maps move first (nearest-neighbor up / average-pool down) and
    are convolved on the lattice where they are consumed.
    """
    n_components = tau_flat.shape[1]
    maps = tau_flat.reshape(src_grid[0], src_grid[1], n_components)
    maps = resample_to(maps, dst_grid)
    means = local_mean(maps, kernel)
    variance = local_variance(maps, means, kernel)
    return means.reshape(-1, n_components), variance.reshape(-1)


def _worker_count(n_tasks: int) -> int:
    try:
        cap = int(os.environ.get(THREADS_ENV, "1"))
    except ValueError:
        cap = 1
    return max(1, min(cap, n_tasks))


def _layer_posteriors(density, params, mixing, X):
    log_pdf = density.log_pdf(params, X)
    if np.isnan(log_pdf).any():
        raise DegenerateDensity("log-density is NaN during multilayer E-step")
    with np.errstate(divide="ignore"):
        log_joint = np.log(mixing) + log_pdf
    tau = np.exp(log_joint - logsumexp(log_joint, axis=1, keepdims=True))
    return tau, log_pdf


def _variant_update(variant, taus, grids, spec, n_components):
    """Weight fields and normalized mixing updates for every layer.

    Returns (weights_per_layer, mixing_per_layer, shared_mixing_or_None,
    min_variance); the weights are the pre-normalization evidence fields
    used both by the mixing update and by the log-posterior diagnostic, and
    min_variance is the smallest local variance seen this sweep.
    """
    n_layers = len(grids)
    min_var = np.inf
    if variant is ModelVariant.INDEPENDENT_LAYERS:
        weights, mixing = [], []
        for h in range(n_layers):
            m, s2 = stats_on_grid(taus[h], grids[h], grids[h], spec.kernels[h])
            min_var = min(min_var, float(s2.min()))
            weights.append(model_a_weights(taus[h], m, s2))
            mixing.append(update_model_a(taus[h], m, s2))
        return weights, mixing, None, min_var

    if variant is ModelVariant.SHARED_MAP:
        base = grids[0]
        ms, s2s = [], []
        for h in range(n_layers):
            m, s2 = stats_on_grid(taus[h], grids[h], base, spec.kernels[h])
            min_var = min(min_var, float(s2.min()))
            ms.append(m)
            s2s.append(s2)
        shared_w = model_b_weights(ms, s2s)
        shared_p = update_model_b(ms, s2s)
        weights, mixing = [], []
        for h in range(n_layers):
            if grids[h] == base:
                weights.append(shared_w.copy())
                mixing.append(shared_p.copy())
            else:
                w_maps = shared_w.reshape(base[0], base[1], n_components)
                p_maps = shared_p.reshape(base[0], base[1], n_components)
                weights.append(
                    resample_to(w_maps, grids[h]).reshape(-1, n_components))
                mixing.append(
                    resample_to(p_maps, grids[h]).reshape(-1, n_components))
        return weights, mixing, shared_p, min_var

    # chain coupling
    weights, mixing = [], []
    for h in range(n_layers):
        means_triple, var_triple = [], []
        for other in (h - 1, h, h + 1):
            if 0 <= other < n_layers:
                m, s2 = stats_on_grid(
                    taus[other], grids[other], grids[h], spec.kernels[other]
                )
                min_var = min(min_var, float(s2.min()))
            else:
                m, s2 = None, None
            means_triple.append(m)
            var_triple.append(s2)
        weights.append(model_c_weights(means_triple, var_triple))
        mixing.append(update_model_c(means_triple, var_triple))
    return weights, mixing, None, min_var


def fit_multilayer(stack, n_components: int, variant, density,
                   kernels: KernelSpec | None = None,
                   config: MultilayerConfig | None = None) -> MultilayerState:
    """Fit the coupled mixture across every layer of a feature stack.

    Initialization: k-means on layer-1 features seeds layer 1; its
    posteriors, resampled to each lattice, become every layer's initial
    mixing field, and layers h >= 2 get one M-step from them. The main loop
    then alternates a full E-step phase over layers with a full M-step phase
    (mixing update per the coupling model, then density parameters), exactly
    n_iter times. Per-layer log-posterior traces are recorded at each
    iterate, including the final state.

    ``stack`` may be a FeatureStack or a list of (pixels, grid) pairs.
    """
    variant = ModelVariant.from_string(variant)
    config = (config or MultilayerConfig()).validate()
    if n_components < 2:
        raise ValueError("n_components must be >= 2")

    if isinstance(stack, FeatureStack):
        data = [layer.pixels() for layer in stack]
        grids = [layer.grid for layer in stack]
    else:
        data = [np.asarray(x, dtype=np.float64) for x, _ in stack]
        grids = [tuple(g) for _, g in stack]
    n_layers = len(data)
    if kernels is None:
        kernels = KernelSpec.default(variant, n_layers)
    if len(kernels) != n_layers:
        raise ValueError(
            f"kernel spec covers {len(kernels)} layers, stack has {n_layers}"
        )
    for h, X in enumerate(data):
        if X.shape[0] <= n_components:
            raise ValueError(
                f"layer {h + 1} has {X.shape[0]} pixels <= K={n_components}"
            )

    diagnostics: list = []
    rng = np.random.default_rng(config.rng_seed)

    # layer 1: k-means hard assignments -> params -> posteriors
    tau1_hard = hard_assignment_init(
        data[0], n_components, rng, kmeans_iter=config.kmeans_iter
    )
    init_diags: list = []
    params1 = m_step_with_recovery(density, data[0], tau1_hard, None, init_diags)
    uniform = np.full((data[0].shape[0], n_components), 1.0 / n_components)
    tau1, _ = _layer_posteriors(density, params1, uniform, data[0])

    # propagate layer-1 posteriors as every layer's initial mixing field
    tau1_maps = tau1.reshape(grids[0][0], grids[0][1], n_components)
    mixing = [
        resample_to(tau1_maps, grids[h]).reshape(-1, n_components)
        for h in range(n_layers)
    ]
    params = [params1]
    for h in range(1, n_layers):
        layer_diags: list = []
        params.append(
            m_step_with_recovery(density, data[h], mixing[h], None, layer_diags)
        )
        init_diags.extend({"layer": h + 1, **d} for d in layer_diags)
    diagnostics.extend(
        d if "layer" in d else {"layer": 1, **d} for d in init_diags
    )

    traces: list[list[float]] = [[] for _ in range(n_layers)]
    taus: list[np.ndarray] = [None] * n_layers

    def e_phase():
        workers = _worker_count(n_layers)
        if workers == 1:
            results = [
                _layer_posteriors(density, params[h], mixing[h], data[h])
                for h in range(n_layers)
            ]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(
                    pool.map(
                        lambda h: _layer_posteriors(
                            density, params[h], mixing[h], data[h]
                        ),
                        range(n_layers),
                    )
                )
        return results

    def record_trace(results, weights, min_variance):
        for h in range(n_layers):
            tau, log_pdf = results[h]
            w = np.maximum(weights[h], WEIGHT_FLOOR)
            w = w / w.sum(axis=1, keepdims=True)
            with np.errstate(divide="ignore"):
                log_mix = np.log(mixing[h])
            value = float(np.sum(w * log_mix) + np.sum(tau * log_pdf))
            traces[h].append(value)
            diagnostics.append(
                {"event": "simplex_check", "layer": h + 1,
                 "responsibility_dev": simplex_row_deviation(tau),
                 "mixing_dev": simplex_row_deviation(mixing[h]),
                 "min_variance": min_variance}
            )

    shared = None
    for _ in range(config.n_iter):
        results = e_phase()
        taus = [r[0] for r in results]
        weights, new_mixing, shared, min_var = _variant_update(
            variant, taus, grids, kernels, n_components
        )
        record_trace(results, weights, min_var)
        mixing = new_mixing
        for h in range(n_layers):
            layer_diags: list = []
            params[h] = m_step_with_recovery(
                density, data[h], taus[h], params[h], layer_diags
            )
            diagnostics.extend({"layer": h + 1, **d} for d in layer_diags)

    # close with a final E-step so the returned state is self-consistent
    results = e_phase()
    taus = [r[0] for r in results]
    weights, _, _, min_var = _variant_update(
        variant, taus, grids, kernels, n_components
    )
    record_trace(results, weights, min_var)

    return MultilayerState(
        variant=variant,
        n_components=n_components,
        grids=grids,
        mixing=mixing,
        params=params,
        responsibilities=taus,
        traces=traces,
        shared_mixing=shared,
        diagnostics=diagnostics,
    )


def extract_labels(state: MultilayerState, layer: int) -> LabelMap:
    """Hard labels for one layer (1-indexed); argmax with ties to smallest k.

    Under the shared-map variant the labels come from the shared field and
    are nearest-neighbor resampled, so every layer's map is an exact
    resampling of the same segmentation.
    """
    h = layer - 1
    grid = state.grids[h]
    if state.variant is ModelVariant.SHARED_MAP and state.shared_mixing is not None:
        base = state.grids[0]
        shared_labels = np.argmax(
            state.shared_mixing.reshape(base[0], base[1], -1), axis=2
        )
        labels = resample_labels_nn(shared_labels, grid)
    else:
        labels = np.argmax(
            state.mixing[h].reshape(grid[0], grid[1], -1), axis=2
        )
    return LabelMap(grid[0], grid[1], labels.astype(np.int64))
