"""Pure-NumPy reference kernels for the weighted-least-squares hot path.

The compiled twin in ``_core.pyx`` mirrors these signatures for the
canonical family codes; this module is the always-available fallback and
the ground truth the extension is tested against.

Family codes:
    0 gaussian-identity, 1 bernoulli-logit, 2 poisson-log,
    3 bernoulli-probit, 4 bernoulli-cloglog, 5 bernoulli-cauchit,
    6 gamma-log.

Status codes returned by ``iwls``:
    0 converged, 1 iteration limit reached, 2 working precision not
    positive definite, 3 non-finite objective encountered.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit, log_ndtr, ndtr

STATUS_OK = 0
STATUS_MAX_ITER = 1
STATUS_SINGULAR = 2
STATUS_NONFINITE = 3

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def loglik_eta(eta, y, w, phi, code):
    """Per-observation log-likelihood kernel terms at linear predictor eta."""
    if code == 0:
        return -w * (y - eta) ** 2 / (2.0 * phi)
    if code == 1:
        return w * (y * eta - np.logaddexp(0.0, eta)) / phi
    if code == 2:
        return w * (y * eta - np.exp(eta)) / phi
    if code == 3:
        return w * (y * log_ndtr(eta) + (1.0 - y) * log_ndtr(-eta)) / phi
    if code == 4:
        with np.errstate(all="ignore"):
            return w * (y * np.log(-np.expm1(-np.exp(eta))) - (1.0 - y) * np.exp(eta)) / phi
    if code == 5:
        mu = np.arctan(eta) / math.pi + 0.5
        with np.errstate(all="ignore"):
            return w * (y * np.log(mu) + (1.0 - y) * np.log1p(-mu)) / phi
    if code == 6:
        return w * (-y * np.exp(-eta) - eta) / phi
    raise ValueError(f"unknown family code {code}")


def loglik(xt, beta, y, w, phi, code):
    eta = xt @ beta
    return float(np.sum(loglik_eta(eta, y, w, phi, code)))


def _working_quantities(eta, y, w, phi, code):
    """(omega, score) with omega the expected-information weights and
    score_i = w_i (y_i - mu_i) h'(eta_i) / (phi v(mu_i))."""
    if code == 0:
        omega = w / phi
        score = w * (y - eta) / phi
    elif code == 1:
        mu = expit(eta)
        omega = w * mu * (1.0 - mu) / phi
        score = w * (y - mu) / phi
    elif code == 2:
        mu = np.exp(eta)
        omega = w * mu / phi
        score = w * (y - mu) / phi
    elif code == 3:
        mu = ndtr(eta)
        dmu = np.exp(-0.5 * eta**2) / _SQRT_2PI
        v = np.maximum(mu * (1.0 - mu), 1e-300)
        omega = w * dmu**2 / (phi * v)
        score = w * (y - mu) * dmu / (phi * v)
    elif code == 4:
        ex = np.exp(eta)
        mu = -np.expm1(-ex)
        dmu = np.exp(eta - ex)
        v = np.maximum(mu * (1.0 - mu), 1e-300)
        omega = w * dmu**2 / (phi * v)
        score = w * (y - mu) * dmu / (phi * v)
    elif code == 5:
        mu = np.arctan(eta) / math.pi + 0.5
        dmu = 1.0 / (math.pi * (1.0 + eta**2))
        v = np.maximum(mu * (1.0 - mu), 1e-300)
        omega = w * dmu**2 / (phi * v)
        score = w * (y - mu) * dmu / (phi * v)
    elif code == 6:
        mu = np.exp(eta)
        omega = w / phi
        score = w * (y - mu) / (phi * mu)
    else:
        raise ValueError(f"unknown family code {code}")
    return omega, score


def _assemble(xt, eta, y, w, phi, code, prior_scale, prior_gram):
    """Working normal equations: precision A and right-hand side."""
    omega, score = _working_quantities(eta, y, w, phi, code)
    A = xt.T @ (omega[:, None] * xt)
    if prior_scale > 0.0:
        A[1:, 1:] += prior_scale * prior_gram
    rhs = xt.T @ (omega * eta + score)
    return A, rhs


def _log_joint(xt, beta, y, w, phi, code, prior_scale, prior_gram):
    ll = loglik(xt, beta, y, w, phi, code)
    if prior_scale > 0.0:
        s = beta[1:]
        ll -= 0.5 * prior_scale * float(s @ (prior_gram @ s))
    return ll


def iwls(xt, y, w, phi, code, c, g, start, max_iter, tol, prior_gram, one_step):
    """Bayesian IWLS against the zero-mean slope prior with precision
    (g phi c)^-1 * prior_gram (intercept flat).

    ``one_step`` returns the Gaussian moments after exactly one update from
    ``start``; otherwise iterates to convergence of the penalized objective
    (relative tolerance ``tol``, step-halving on decreases) and re-evaluates
    the precision at the final coefficients.

    Returns ``(beta, chol_lower, logdet, loglik_at_beta, n_iter, status)``.
    """
    xt = np.asarray(xt, dtype=float)
    beta = np.array(start, dtype=float)
    prior_scale = 0.0 if not np.isfinite(g) else 1.0 / (g * phi * c)

    def factor(A):
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            return None
        # a pivot that lost ~13 digits to cancellation means rank deficiency
        if np.any(np.diag(L) ** 2 <= 1e-13 * np.abs(np.diag(A))):
            return None
        return L

    if one_step:
        eta = xt @ beta
        A, rhs = _assemble(xt, eta, y, w, phi, code, prior_scale, prior_gram)
        L = factor(A)
        if L is None:
            return beta, None, math.nan, math.nan, 0, STATUS_SINGULAR
        mean = _cho_solve(L, rhs)
        logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
        ll = loglik(xt, mean, y, w, phi, code)
        return mean, L, logdet, ll, 1, STATUS_OK

    lj = _log_joint(xt, beta, y, w, phi, code, prior_scale, prior_gram)
    if not math.isfinite(lj):
        return beta, None, math.nan, math.nan, 0, STATUS_NONFINITE
    status = STATUS_MAX_ITER
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        eta = xt @ beta
        A, rhs = _assemble(xt, eta, y, w, phi, code, prior_scale, prior_gram)
        L = factor(A)
        if L is None:
            return beta, None, math.nan, math.nan, n_iter, STATUS_SINGULAR
        proposal = _cho_solve(L, rhs)
        lj_new = _log_joint(xt, proposal, y, w, phi, code, prior_scale, prior_gram)
        # step-halving keeps the objective non-decreasing
        halvings = 0
        while (not math.isfinite(lj_new) or lj_new < lj - 1e-12) and halvings < 30:
            proposal = 0.5 * (proposal + beta)
            lj_new = _log_joint(xt, proposal, y, w, phi, code, prior_scale, prior_gram)
            halvings += 1
        if not math.isfinite(lj_new):
            return beta, None, math.nan, math.nan, n_iter, STATUS_NONFINITE
        beta = proposal
        if abs(lj_new - lj) <= tol * max(1.0, abs(lj_new)):
            lj = lj_new
            status = STATUS_OK
            break
        lj = lj_new
    eta = xt @ beta
    A, _ = _assemble(xt, eta, y, w, phi, code, prior_scale, prior_gram)
    L = factor(A)
    if L is None:
        return beta, None, math.nan, math.nan, n_iter, STATUS_SINGULAR
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    ll = float(np.sum(loglik_eta(eta, y, w, phi, code)))
    return beta, L, logdet, ll, n_iter, status


def _cho_solve(L, rhs):
    z = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, z)


# Logistic derivative polynomials in mu (orders 2, 3, 5 of expit), used by
# the higher-order evidence correction; identical to the families module.
_D2 = (0.0, 1.0, -3.0, 2.0)
_D3 = (0.0, 1.0, -7.0, 12.0, -6.0)
_D5 = (0.0, 1.0, -31.0, 180.0, -390.0, 360.0, -120.0)


def _poly(mu, coeffs):
    out = np.zeros_like(mu)
    for c in reversed(coeffs):
        out = out * mu + c
    return out


def correction_factor(xt, beta, w, phi, code, L):
    """Higher-order Laplace correction factor at the posterior mode.

    F = 1 - (1/8) sum q_i d3_i b_i^2 - (1/48) sum q_i d5_i b_i^3
          + (5/24) k' (L L')^-1 k,     k = sum q_i d2_i b_i x_i,

    with q_i = w_i/phi, d's the response-function derivatives at eta_i, and
    b_i = x_i' (L L')^-1 x_i.  Supports the canonical codes only.
    """
    if code == 0:
        return 1.0
    eta = xt @ beta
    if code == 1:
        mu = expit(eta)
        d2, d3, d5 = _poly(mu, _D2), _poly(mu, _D3), _poly(mu, _D5)
    elif code == 2:
        d2 = d3 = d5 = np.exp(eta)
    else:
        raise ValueError(f"correction undefined for family code {code}")
    q = w / phi
    V = np.linalg.solve(L, xt.T)
    b = np.einsum("ij,ij->j", V, V)
    k = xt.T @ (q * d2 * b)
    u = np.linalg.solve(L, k)
    return float(1.0 - (q * d3 * b**2).sum() / 8.0
                 - (q * d5 * b**3).sum() / 48.0
                 + 5.0 / 24.0 * (u @ u))
