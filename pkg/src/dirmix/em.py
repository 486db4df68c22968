"""Flexible EM engine for a single layer.

The loop alternates the standard E-step with an M-step split in two halves:
mixing probabilities follow the plugged-in update rule (weights, floored at
1e-12, row-normalized), and component parameters follow the density family's
weighted MLE. The log-posterior diagnostic collects the two terms of the
expected completed objective that depend on (p, a); its trace is recorded
once per sweep and drives the relative-change stopping test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateDensity, NonFinite, ZeroRowWeight
from .kmeans import kmeans, one_hot
from .validation import as_float_matrix, simplex_row_deviation

WEIGHT_FLOOR = 1e-12
EMPTY_EPS = 1e-8


@dataclass
class EMConfig:
    max_iter: int = 100
    rel_tol: float = 1e-6
    rng_seed: int = 0
    kmeans_iter: int = 50

    def validate(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be >= 0")
        return self


@dataclass
class FitResult:
    mixing: np.ndarray
    params: object
    responsibilities: np.ndarray
    log_posterior_trace: list[float]
    n_iter: int
    converged: bool
    diagnostics: list = field(default_factory=list)

    @property
    def labels(self):
        return np.argmax(self.responsibilities, axis=1)


def e_step(density, params, mixing, data) -> np.ndarray:
    """Posterior responsibilities, computed in the log domain.

    tau_{n,k} proportional to p_{n,k} * density_k(x_n); rows normalized with
    log-sum-exp so deep-feature log-densities of large magnitude stay stable.
    """
    data = as_float_matrix(data)
    log_pdf = density.log_pdf(params, data)
    if np.isnan(log_pdf).any():
        bad = np.argwhere(np.isnan(log_pdf))[0]
        raise DegenerateDensity(
            f"log-density is NaN at sample {bad[0]}, component {bad[1]}"
        )
    mixing = np.asarray(mixing, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_joint = np.log(mixing) + log_pdf
    norm = logsumexp(log_joint, axis=1, keepdims=True)
    return np.exp(log_joint - norm)


def apply_update_rule(rule, tau) -> np.ndarray:
    """Row-normalized rule weights: p_{n,k} = f_{n,k} / sum_k f_{n,k}.

    Weights are floored at 1e-12 before normalizing so the division is always
    well defined; a row whose floored weights still fail to reach the floor
    (NaN contamination) raises ZeroRowWeight.
    """
    weights = np.asarray(rule(tau), dtype=np.float64)
    weights = np.maximum(weights, WEIGHT_FLOOR)
    sums = weights.sum(axis=1, keepdims=True)
    if not np.all(sums >= WEIGHT_FLOOR):
        bad = int(np.argmin(np.nan_to_num(sums[:, 0], nan=-1.0)))
        raise ZeroRowWeight(f"row {bad} weights cannot be normalized")
    return weights / sums


def _q_terms(density, params, mixing, rule, data, tau) -> float:
    weights = np.maximum(np.asarray(rule(tau), dtype=np.float64), WEIGHT_FLOOR)
    weights = weights / weights.sum(axis=1, keepdims=True)
    log_pdf = density.log_pdf(params, data)
    with np.errstate(divide="ignore"):
        log_mix = np.log(np.asarray(mixing, dtype=np.float64))
    value = float(np.sum(weights * log_mix) + np.sum(tau * log_pdf))
    if not np.isfinite(value):
        raise NonFinite(f"log-posterior is {value}")
    return value


def log_posterior(density, params, mixing, rule, data) -> float:
    """Diagnostic objective: sum f(tau)*ln p + sum tau*ln density.

    tau is taken at the current E-step for the supplied state, so the value
    is a function of (params, mixing) alone. The rule weights enter row-
    normalized: a positive per-row scaling leaves the mixing M-step argmax
    (and therefore the per-sweep monotonicity guarantee) unchanged while
    keeping the diagnostic on one scale across rules whose raw weights range
    from O(1) posteriors to inverse-variance precisions.
    """
    data = as_float_matrix(data)
    tau = e_step(density, params, mixing, data)
    return _q_terms(density, params, mixing, rule, data, tau)


def m_step_with_recovery(density, data, tau, prev, diagnostics) -> object:
    """Density M-step with starved-component recovery.

    Components whose responsibility mass falls below 1e-8 are re-initialized
    from the sample with the lowest max-responsibility (the point the current
    model explains worst), keeping K fixed.
    """
    col = tau.sum(axis=0)
    starved = np.flatnonzero(col < EMPTY_EPS)
    if starved.size == 0:
        return density.m_step(data, tau, prev=prev, diagnostics=diagnostics)
    work = tau.copy()
    work[:, starved] = 1.0 / tau.shape[0]
    params = density.m_step(data, work, prev=prev, diagnostics=diagnostics)
    anchor_order = np.argsort(tau.max(axis=1), kind="stable")
    for j, k in enumerate(starved):
        anchor = data[anchor_order[j % data.shape[0]]]
        density.reinit_component(params, int(k), data, anchor)
        diagnostics.append({"event": "empty_component", "component": int(k)})
    return params


def hard_assignment_init(data, n_components, rng, kmeans_iter=50) -> np.ndarray:
    """K-means hard assignments as one-hot initial responsibilities."""
    labels, _ = kmeans(data, n_components, rng, max_iter=kmeans_iter)
    return one_hot(labels, n_components)


def run_em(density, data, n_components, rule, config: EMConfig | None = None,
           init=None) -> FitResult:
    """Fit one layer with the flexible EM scheme.

    Each iteration runs the split M-step from the previous responsibilities
    (mixing via the update rule, component parameters via the density family)
    and then the E-step; the log-posterior is recorded at the resulting
    state, so the trace, parameters, mixing and responsibilities returned
    always describe the same iterate. Deterministic for a fixed
    config.rng_seed. ``init`` may supply a (params, mixing) pair to start
    from instead of the k-means hard assignments.
    """
    config = (config or EMConfig()).validate()
    data = as_float_matrix(data)
    if data.shape[0] <= n_components:
        raise ValueError(
            f"need more samples than components "
            f"({data.shape[0]} <= {n_components})"
        )
    diagnostics: list = []
    params = None
    if init is None:
        rng = np.random.default_rng(config.rng_seed)
        tau = hard_assignment_init(data, n_components, rng, config.kmeans_iter)
    else:
        params, mixing = init
        tau = e_step(density, params, mixing, data)

    trace: list[float] = []
    converged = False
    prev_lp = None
    mixing = None
    for _ in range(config.max_iter):
        mixing = apply_update_rule(rule, tau)
        params = m_step_with_recovery(density, data, tau, params, diagnostics)
        tau = e_step(density, params, mixing, data)
        lp = _q_terms(density, params, mixing, rule, data, tau)
        trace.append(lp)
        diagnostics.append(
            {"event": "simplex_check",
             "responsibility_dev": simplex_row_deviation(tau),
             "mixing_dev": simplex_row_deviation(mixing)}
        )
        if prev_lp is not None and abs(lp - prev_lp) <= config.rel_tol * abs(lp):
            converged = True
            break
        prev_lp = lp

    return FitResult(
        mixing=mixing,
        params=params,
        responsibilities=tau,
        log_posterior_trace=trace,
        n_iter=len(trace),
        converged=converged,
        diagnostics=diagnostics,
    )
