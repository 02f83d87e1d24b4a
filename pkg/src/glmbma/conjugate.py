"""Exact closed forms for gaussian-identity models with fixed dispersion.

This module is the ground truth the approximate evidence path is tested
against; nothing in the main path imports it, so agreement between the two
is a real check rather than a tautology.

With a centered design, flat intercept prior and slope prior
N(0, g phi (X'WX)^-1), the conditional coefficient posterior factorizes into
an intercept normal and a shrunk slope normal, and the conditional evidence
is, in this package's normalization,

    sqrt(2 pi phi / sum(w)) (g+1)^(-p/2)
        exp{-SSR / (2 phi (g+1))} exp{-SSE / (2 phi)}.

An inverse-gamma IG(a, b) law on g + 1 truncated to g > 0 is conjugate to
that likelihood; the evidence then involves only the truncated-gamma
normalizers M(a, b) and M(a + p/2, SSR/(2 phi) + b).

Closed forms require the weighted design to stay intercept-orthogonal
(X'W1 = 0), which holds for constant weights over centered columns.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from .exceptions import ConstructionError, SingularMatrixError
from .families import Dataset, Family, Link
from .hyperpriors import log_iig_normalizer
from .numutil import reg_lower_gamma


def _check_conjugate(ds: Dataset, X: np.ndarray):
    fl = ds.family_link
    if fl.family is not Family.GAUSSIAN or fl.link is not Link.IDENTITY:
        raise ConstructionError("closed forms exist only for gaussian-identity models")
    if X.shape[1]:
        imbalance = X.T @ ds.w
        scale = max(1.0, float(np.abs(X * ds.w[:, None]).sum(axis=0).max()))
        if np.any(np.abs(imbalance) > 1e-8 * scale):
            raise ConstructionError(
                "closed forms need X'W1 = 0 (constant weights over a centered design)"
            )


def _cholesky(gram: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("X'WX is singular") from exc


def sums_of_squares(ds: Dataset, design) -> tuple[float, float]:
    """Weighted error and regression sums of squares about the weighted mean."""
    X = np.asarray(getattr(design, "X_centered", design), dtype=float)
    _check_conjugate(ds, X)
    w = ds.w
    ybar = float(w @ ds.y / w.sum())
    tss = float(w @ (ds.y - ybar) ** 2)
    if X.shape[1] == 0:
        return tss, 0.0
    gram = (X * w[:, None]).T @ X
    L = _cholesky(gram)
    rhs = X.T @ (w * ds.y)
    beta_hat = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    ssr = float(rhs @ beta_hat)
    return max(tss - ssr, 0.0), ssr


def cond_posterior_params(ds: Dataset, design, g: float):
    """Exact conditional posterior: intercept (mean, var) and slopes (mean, cov)."""
    X = np.asarray(getattr(design, "X_centered", design), dtype=float)
    _check_conjugate(ds, X)
    w = ds.w
    sw = float(w.sum())
    b0_mean = float(w @ ds.y / sw)
    b0_var = ds.phi / sw
    gram = (X * w[:, None]).T @ X
    L = _cholesky(gram)
    rhs = X.T @ (w * ds.y)
    beta_hat = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    shrink = g / (g + 1.0)
    gram_inv = np.linalg.inv(gram)
    return b0_mean, b0_var, shrink * beta_hat, shrink * ds.phi * gram_inv


def cond_marglik_exact(ds: Dataset, design, g: float) -> float:
    """log of the exact conditional evidence at fixed g."""
    if not g >= 0:
        raise ConstructionError(f"g must be nonnegative, got {g}")
    sse, ssr = sums_of_squares(ds, design)
    p = np.asarray(getattr(design, "X_centered", design)).shape[1]
    phi = ds.phi
    const = 0.5 * math.log(2.0 * math.pi * phi / ds.sum_w)
    return const - 0.5 * p * math.log1p(g) - ssr / (2.0 * phi * (g + 1.0)) - sse / (2.0 * phi)


def iig_posterior_params(ds: Dataset, design, a: float, b: float) -> tuple[float, float]:
    """Updated (a, b) of the truncated inverse-gamma posterior of g + 1."""
    _, ssr = sums_of_squares(ds, design)
    p = np.asarray(getattr(design, "X_centered", design)).shape[1]
    return a + 0.5 * p, ssr / (2.0 * ds.phi) + b


def marglik_exact_iig(ds: Dataset, design, a: float, b: float) -> float:
    """log evidence with the incomplete inverse-gamma prior integrated out."""
    sse, _ = sums_of_squares(ds, design)
    a_post, b_post = iig_posterior_params(ds, design, a, b)
    const = 0.5 * math.log(2.0 * math.pi * ds.phi / ds.sum_w)
    return (
        const
        + log_iig_normalizer(a, b)
        - log_iig_normalizer(a_post, b_post)
        - sse / (2.0 * ds.phi)
    )


# ---------------------------------------------------------------------------
# Posterior of z = log(g) under the incomplete inverse-gamma prior
# ---------------------------------------------------------------------------

def z_posterior_logpdf(z: float, a_post: float, b_post: float) -> float:
    """Exact posterior log-density of z = log(g)."""
    u = math.exp(z) + 1.0
    log_norm = a_post * math.log(b_post) - gammaln(a_post) - math.log(
        reg_lower_gamma(a_post, b_post)
    )
    return log_norm - (a_post + 1.0) * math.log(u) - b_post / u + z


def z_posterior_cdf(z: float, a_post: float, b_post: float) -> float:
    """Exact posterior CDF of z = log(g)."""
    u = math.exp(z) + 1.0
    tail = reg_lower_gamma(a_post, b_post)
    return (tail - reg_lower_gamma(a_post, b_post / u)) / tail


def g_posterior_mean(a_post: float, b_post: float) -> float:
    """Exact posterior mean of g; finite only for a_post > 1."""
    if a_post <= 1.0:
        raise ConstructionError(f"posterior mean of g is infinite for a_post={a_post} <= 1")
    num = reg_lower_gamma(a_post - 1.0, b_post)
    den = reg_lower_gamma(a_post, b_post)
    return b_post * num / ((a_post - 1.0) * den) - 1.0
