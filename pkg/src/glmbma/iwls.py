"""Gaussian approximation of the conditional coefficient posterior.

The posterior of (beta0, slopes) given g is approximated by iterating
weighted least squares against the normal equations augmented with the
slope prior precision (g phi c)^-1 X'WX; the intercept stays flat.  In the
gaussian-identity case the log posterior is exactly quadratic, so a single
step from any start already gives the exact moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .exceptions import ConvergenceError, SingularMatrixError
from .families import Dataset, Family, FamilyLink, Link, link_constant

DEFAULT_MAX_ITER = 50
DEFAULT_TOL = 1e-10

_FAMILY_CODE = {
    (Family.GAUSSIAN, Link.IDENTITY): 0,
    (Family.BERNOULLI, Link.LOGIT): 1,
    (Family.POISSON, Link.LOG): 2,
    (Family.BERNOULLI, Link.PROBIT): 3,
    (Family.BERNOULLI, Link.CLOGLOG): 4,
    (Family.BERNOULLI, Link.CAUCHIT): 5,
    (Family.GAMMA, Link.LOG): 6,
}


def family_code(fl: FamilyLink) -> int:
    return _FAMILY_CODE[(fl.family, fl.link)]


@dataclass(frozen=True)
class GaussApprox:
    """Mean and precision (via its lower Cholesky factor) of the Gaussian
    approximation, plus the log-determinant of the precision."""

    mean: np.ndarray
    chol_lower: np.ndarray
    log_det_precision: float
    loglik_at_mean: float
    n_iter: int

    @property
    def precision(self) -> np.ndarray:
        return self.chol_lower @ self.chol_lower.T

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One draw from N(mean, precision^-1)."""
        noise = rng.standard_normal(self.mean.shape[0])
        return self.mean + np.linalg.solve(self.chol_lower.T, noise)

    def logpdf(self, x: np.ndarray) -> float:
        d = self.mean.shape[0]
        u = self.chol_lower.T @ (np.asarray(x, dtype=float) - self.mean)
        return 0.5 * self.log_det_precision - 0.5 * d * math.log(2.0 * math.pi) - 0.5 * float(u @ u)


def augment_design(ds: Dataset, design) -> tuple[np.ndarray, np.ndarray]:
    """Intercept-augmented design and the weighted slope Gram matrix X'WX."""
    X = getattr(design, "X_centered", design)
    X = np.asarray(X, dtype=float)
    xt = np.ascontiguousarray(np.column_stack([np.ones(ds.n), X]))
    prior_gram = (X * ds.w[:, None]).T @ X if X.shape[1] else np.empty((0, 0))
    return xt, prior_gram


def _run(ds, xt, prior_gram, g, start, max_iter, tol, one_step):
    code = family_code(ds.family_link)
    c = link_constant(ds.family_link)
    if start is None:
        start = np.zeros(xt.shape[1])
    beta, L, logdet, ll, n_iter, status = kernels.iwls(
        xt, ds.y, ds.w, ds.phi, code, c, g, np.asarray(start, dtype=float),
        max_iter, tol, prior_gram, one_step,
    )
    if status == kernels.STATUS_SINGULAR:
        raise SingularMatrixError("working precision is not positive definite")
    if status == kernels.STATUS_NONFINITE:
        raise ConvergenceError("penalized objective became non-finite", last_iterate=beta)
    if status == kernels.STATUS_MAX_ITER:
        raise ConvergenceError(
            f"no convergence within {max_iter} iterations", last_iterate=beta
        )
    return GaussApprox(beta, L, logdet, ll, n_iter)


def iwls_gauss_approx(
    ds: Dataset,
    design,
    g: float,
    start: np.ndarray | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> GaussApprox:
    """Converged Gaussian approximation of the coefficient posterior at g."""
    if not g > 0:
        raise ValueError(f"g must be positive, got {g}")
    xt, prior_gram = augment_design(ds, design)
    return _run(ds, xt, prior_gram, g, start, max_iter, tol, one_step=False)


def iwls_one_step(ds: Dataset, design, g: float, from_beta: np.ndarray) -> GaussApprox:
    """Gaussian moments after exactly one weighted-least-squares update."""
    if not g > 0:
        raise ValueError(f"g must be positive, got {g}")
    xt, prior_gram = augment_design(ds, design)
    return _run(ds, xt, prior_gram, g, from_beta, 1, DEFAULT_TOL, one_step=True)


def iwls_ml(ds: Dataset, design, max_iter: int = DEFAULT_MAX_ITER,
            tol: float = DEFAULT_TOL) -> GaussApprox:
    """Unpenalized maximum-likelihood fit (no slope prior)."""
    xt, prior_gram = augment_design(ds, design)
    fit = _run(ds, xt, prior_gram, math.inf, None, max_iter, tol, one_step=False)
    if ds.family_link.family is Family.BERNOULLI:
        eta = xt @ fit.mean
        if np.abs(eta).max() > 30.0:
            raise ConvergenceError(
                "fitted probabilities reached 0/1; the data appear separated",
                last_iterate=fit.mean,
            )
    return fit
