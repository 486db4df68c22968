"""Gaussian and Student-t component families.

Each family exposes the same three-method surface the EM engine consumes:
``log_pdf`` (per-sample, per-component log-densities), ``m_step`` (weighted
maximum-likelihood update) and ``reinit_component`` (recovery for starved
components). Covariance/scale estimates carry a relative ridge,
1e-6 * trace/d * I, so near-degenerate feature clouds stay factorizable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import digamma, gammaln

from .errors import DofBracketFailure, EmptyComponent, NotPositiveDefinite
from .validation import as_float_matrix

RIDGE_SCALE = 1e-6
RIDGE_ABS_FLOOR = 1e-12
WEIGHT_EPS = 1e-8
DOF_MIN = 0.5
DOF_MAX = 1000.0
DOF_INIT = 10.0
DOF_TOL = 1e-6
DOF_MAX_STEPS = 200


@dataclass
class GaussianParams:
    """Per-component mean vectors (K, d) and covariance matrices (K, d, d)."""

    means: np.ndarray
    covariances: np.ndarray

    @property
    def n_components(self):
        return self.means.shape[0]

    @property
    def n_features(self):
        return self.means.shape[1]

    def copy(self):
        return GaussianParams(self.means.copy(), self.covariances.copy())


@dataclass
class StudentParams:
    """Per-component means (K, d), scale matrices (K, d, d) and dof (K,)."""

    means: np.ndarray
    scales: np.ndarray
    dofs: np.ndarray

    @property
    def n_components(self):
        return self.means.shape[0]

    @property
    def n_features(self):
        return self.means.shape[1]

    def copy(self):
        return StudentParams(self.means.copy(), self.scales.copy(), self.dofs.copy())


def _cholesky(matrix: np.ndarray, component: int) -> np.ndarray:
    sym_gap = np.max(np.abs(matrix - matrix.T)) if matrix.size else 0.0
    if sym_gap > 1e-10:
        raise NotPositiveDefinite(
            f"component {component}: matrix asymmetric by {sym_gap:.3e}"
        )
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            f"component {component}: Cholesky factorization failed"
        ) from exc


def apply_ridge(matrix: np.ndarray) -> np.ndarray:
    """Relative ridge: add RIDGE_SCALE * trace/d to the diagonal.

    An absolute floor keeps single-point components factorizable (their
    estimated covariance is the zero matrix, for which a relative ridge
    vanishes).
    """
    d = matrix.shape[0]
    ridge = max(RIDGE_SCALE * np.trace(matrix) / d, RIDGE_ABS_FLOOR)
    return matrix + ridge * np.eye(d)


def _mahalanobis_sq(X: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    # solve L z = (x - mu)^T for all samples at once
    diff = (X - mean).T
    sol = solve_triangular(chol, diff, lower=True)
    return np.sum(sol * sol, axis=0)


def _weighted_moments(X, weights, norm):
    """Weighted mean and biased covariance with the given normalizer."""
    mean = weights @ X / weights.sum()
    diff = X - mean
    cov = (weights[:, None] * diff).T @ diff / norm
    cov = 0.5 * (cov + cov.T)
    return mean, cov


class GaussianDensity:
    """Multivariate normal components with full covariances."""

    family = "gaussian"

    def log_pdf(self, params: GaussianParams, X: np.ndarray) -> np.ndarray:
        """(N, K) matrix of exact log-densities, via Cholesky."""
        X = as_float_matrix(X)
        n, d = X.shape
        out = np.empty((n, params.n_components))
        for k in range(params.n_components):
            chol = _cholesky(params.covariances[k], k)
            delta = _mahalanobis_sq(X, params.means[k], chol)
            log_det = 2.0 * np.sum(np.log(np.diag(chol)))
            out[:, k] = -0.5 * (d * np.log(2.0 * np.pi) + log_det + delta)
        return out

    def m_step(self, X, tau, prev=None, diagnostics=None) -> GaussianParams:
        """Weighted MLE: mean and biased covariance per component, plus ridge."""
        X = as_float_matrix(X)
        tau = np.asarray(tau, dtype=np.float64)
        n_components = tau.shape[1]
        d = X.shape[1]
        col = tau.sum(axis=0)
        means = np.empty((n_components, d))
        covs = np.empty((n_components, d, d))
        for k in range(n_components):
            if col[k] < WEIGHT_EPS:
                raise EmptyComponent(
                    f"component {k} has responsibility mass {col[k]:.3e}",
                    component=k,
                )
            mean, cov = _weighted_moments(X, tau[:, k], col[k])
            means[k] = mean
            covs[k] = apply_ridge(cov)
        return GaussianParams(means, covs)

    def init_params(self, X, tau, diagnostics=None) -> GaussianParams:
        return self.m_step(X, tau, diagnostics=diagnostics)

    def reinit_component(self, params, k, X, anchor) -> None:
        """Reset component k to an anchor sample + global data covariance."""
        X = as_float_matrix(X)
        params.means[k] = anchor
        params.covariances[k] = apply_ridge(np.cov(X.T, bias=True).reshape(
            X.shape[1], X.shape[1]))


class StudentDensity:
    """Multivariate Student-t components with latent Gamma scale weights.

    Degrees of freedom are estimated per component by bisection of the
    standard one-dimensional root equation unless ``fixed_dof`` pins them.
    """

    family = "student"

    def __init__(self, estimate_dof: bool = True, fixed_dof: float | None = None,
                 init_dof: float = DOF_INIT):
        self.estimate_dof = estimate_dof and fixed_dof is None
        self.fixed_dof = fixed_dof
        self.init_dof = float(fixed_dof) if fixed_dof is not None else float(init_dof)

    def log_pdf(self, params: StudentParams, X: np.ndarray) -> np.ndarray:
        X = as_float_matrix(X)
        n, d = X.shape
        out = np.empty((n, params.n_components))
        for k in range(params.n_components):
            nu = float(params.dofs[k])
            chol = _cholesky(params.scales[k], k)
            delta = _mahalanobis_sq(X, params.means[k], chol)
            log_det = 2.0 * np.sum(np.log(np.diag(chol)))
            out[:, k] = (
                gammaln(0.5 * (nu + d))
                - gammaln(0.5 * nu)
                - 0.5 * d * np.log(nu * np.pi)
                - 0.5 * log_det
                - 0.5 * (nu + d) * np.log1p(delta / nu)
            )
        return out

    def gamma_weights(self, params: StudentParams, X: np.ndarray) -> np.ndarray:
        """Latent precision weights u = (nu + d) / (nu + delta), (N, K)."""
        X = as_float_matrix(X)
        d = X.shape[1]
        out = np.empty((X.shape[0], params.n_components))
        for k in range(params.n_components):
            chol = _cholesky(params.scales[k], k)
            delta = _mahalanobis_sq(X, params.means[k], chol)
            nu = float(params.dofs[k])
            out[:, k] = (nu + d) / (nu + delta)
        return out

    def m_step(self, X, tau, prev: StudentParams | None = None,
               diagnostics=None) -> StudentParams:
        X = as_float_matrix(X)
        tau = np.asarray(tau, dtype=np.float64)
        n, d = X.shape
        n_components = tau.shape[1]
        col = tau.sum(axis=0)
        if prev is None:
            u = np.ones_like(tau)
            prev_dofs = np.full(n_components, self.init_dof)
        else:
            u = self.gamma_weights(prev, X)
            prev_dofs = prev.dofs

        means = np.empty((n_components, d))
        scales = np.empty((n_components, d, d))
        dofs = np.empty(n_components)
        for k in range(n_components):
            if col[k] < WEIGHT_EPS:
                raise EmptyComponent(
                    f"component {k} has responsibility mass {col[k]:.3e}",
                    component=k,
                )
            w = tau[:, k] * u[:, k]
            mean = w @ X / w.sum()
            diff = X - mean
            scale = (w[:, None] * diff).T @ diff / col[k]
            means[k] = mean
            scales[k] = apply_ridge(0.5 * (scale + scale.T))
            if self.estimate_dof:
                dofs[k] = self._solve_dof(
                    float(prev_dofs[k]), tau[:, k], u[:, k], d, k, diagnostics
                )
            else:
                dofs[k] = self.init_dof if prev is None else prev_dofs[k]
        return StudentParams(means, scales, dofs)

    def init_params(self, X, tau, diagnostics=None) -> StudentParams:
        return self.m_step(X, tau, prev=None, diagnostics=diagnostics)

    def reinit_component(self, params, k, X, anchor) -> None:
        X = as_float_matrix(X)
        params.means[k] = anchor
        params.scales[k] = apply_ridge(np.cov(X.T, bias=True).reshape(
            X.shape[1], X.shape[1]))
        params.dofs[k] = self.init_dof

    @staticmethod
    def _solve_dof(prev_nu, tau_k, u_k, d, component, diagnostics):
        """Bisection for the dof root equation on [DOF_MIN, DOF_MAX].

        g(nu) = ln(nu/2) - digamma(nu/2) + 1 + c with the data-dependent
        constant c; no sign change on the bracket falls back to the previous
        value.
        """
        mass = tau_k.sum()
        c = (
            float(tau_k @ (np.log(u_k) - u_k)) / mass
            + digamma(0.5 * (prev_nu + d))
            - np.log(0.5 * (prev_nu + d))
            + 1.0
        )

        def g(nu):
            return np.log(0.5 * nu) - digamma(0.5 * nu) + c

        lo, hi = DOF_MIN, DOF_MAX
        g_lo, g_hi = g(lo), g(hi)
        if not np.isfinite(g_lo) or not np.isfinite(g_hi) or g_lo * g_hi > 0:
            if diagnostics is not None:
                diagnostics.append(
                    {"event": "dof_bracket_failure", "component": component,
                     "fallback": prev_nu}
                )
                return prev_nu
            raise DofBracketFailure(
                f"component {component}: no dof root in "
                f"[{DOF_MIN}, {DOF_MAX}] (g({DOF_MIN})={g_lo:.3f}, "
                f"g({DOF_MAX})={g_hi:.3f})"
            )
        for _ in range(DOF_MAX_STEPS):
            mid = 0.5 * (lo + hi)
            g_mid = g(mid)
            if g_lo * g_mid <= 0:
                hi, g_hi = mid, g_mid
            else:
                lo, g_lo = mid, g_mid
            if hi - lo < DOF_TOL:
                break
        return 0.5 * (lo + hi)


def gaussian_logpdf(params: GaussianParams, k: int, x) -> float:
    """Log-density of one sample under component k."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return float(GaussianDensity().log_pdf(params, x[None, :])[0, k])


def student_logpdf(params: StudentParams, k: int, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return float(StudentDensity().log_pdf(params, x[None, :])[0, k])


def gaussian_m_step(X, tau) -> GaussianParams:
    """Standalone weighted Gaussian M-step (module-level convenience)."""
    return GaussianDensity().m_step(X, tau)


def student_m_step(X, tau, prev: StudentParams, estimate_dof: bool = True,
                   diagnostics=None) -> StudentParams:
    density = StudentDensity(estimate_dof=estimate_dof)
    return density.m_step(X, tau, prev=prev, diagnostics=diagnostics)


def make_density(name: str, **kwargs):
    """Factory used by the CLI and estimators: 'gaussian' or 'student'."""
    if name == "gaussian":
        return GaussianDensity()
    if name == "student":
        return StudentDensity(**kwargs)
    raise ValueError(f"unknown density family {name!r}")
