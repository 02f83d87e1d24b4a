# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled IWLS kernels for the canonical family codes (0, 1, 2).

Mirrors the semantics of ``_ref.iwls``/``_ref.loglik`` exactly; the
dispatcher in ``kernels/__init__`` routes other codes to the reference
implementation.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, isfinite, isinf, log, log1p, sqrt

cnp.import_array()

STATUS_OK = 0
STATUS_MAX_ITER = 1
STATUS_SINGULAR = 2
STATUS_NONFINITE = 3


cdef inline double _softplus(double x) noexcept nogil:
    # matches numpy.logaddexp(0, x)
    if x > 0.0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline double _expit(double x) noexcept nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef double _loglik_eta(const double* eta, const double* y, const double* w, double phi,
                        int code, int n) noexcept nogil:
    cdef double total = 0.0
    cdef double r
    cdef int i
    if code == 0:
        for i in range(n):
            r = y[i] - eta[i]
            total -= w[i] * r * r / (2.0 * phi)
    elif code == 1:
        for i in range(n):
            total += w[i] * (y[i] * eta[i] - _softplus(eta[i])) / phi
    else:
        for i in range(n):
            total += w[i] * (y[i] * eta[i] - exp(eta[i])) / phi
    return total


cdef int _cholesky(double[:, ::1] A, double[:, ::1] L, int d) noexcept nogil:
    """Lower Cholesky of A into L; returns 1 when not positive definite."""
    cdef int i, j, k
    cdef double s
    for j in range(d):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not (s > 1e-13 * fabs(A[j, j])) or not isfinite(s):
            return 1
        L[j, j] = sqrt(s)
        for i in range(j + 1, d):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
        for i in range(j):
            L[i, j] = 0.0
    return 0


cdef void _cho_solve(double[:, ::1] L, const double* rhs, double* out, int d) noexcept nogil:
    cdef int i, k
    cdef double s
    for i in range(d):
        s = rhs[i]
        for k in range(i):
            s -= L[i, k] * out[k]
        out[i] = s / L[i, i]
    for i in range(d - 1, -1, -1):
        s = out[i]
        for k in range(i + 1, d):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]


cdef void _eta(const double[:, ::1] xt, const double* beta, double* eta, int n, int d) noexcept nogil:
    cdef int i, j
    cdef double s
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += xt[i, j] * beta[j]
        eta[i] = s


cdef void _assemble(const double[:, ::1] xt, const double* eta, const double* y, const double* w,
                    double phi, int code, double prior_scale,
                    const double[:, ::1] prior_gram, double[:, ::1] A,
                    double* rhs, int n, int d) noexcept nogil:
    cdef int i, j, k
    cdef double mu, omega, score, t
    for j in range(d):
        rhs[j] = 0.0
        for k in range(d):
            A[j, k] = 0.0
    for i in range(n):
        if code == 0:
            omega = w[i] / phi
            score = w[i] * (y[i] - eta[i]) / phi
        elif code == 1:
            mu = _expit(eta[i])
            omega = w[i] * mu * (1.0 - mu) / phi
            score = w[i] * (y[i] - mu) / phi
        else:
            mu = exp(eta[i])
            omega = w[i] * mu / phi
            score = w[i] * (y[i] - mu) / phi
        t = omega * eta[i] + score
        for j in range(d):
            rhs[j] += xt[i, j] * t
            for k in range(j + 1):
                A[j, k] += omega * xt[i, j] * xt[i, k]
    for j in range(d):
        for k in range(j):
            A[k, j] = A[j, k]
    if prior_scale > 0.0:
        for j in range(1, d):
            for k in range(1, d):
                A[j, k] += prior_scale * prior_gram[j - 1, k - 1]


cdef double _log_joint(const double[:, ::1] xt, const double* beta, double* eta,
                       const double* y, const double* w, double phi, int code,
                       double prior_scale, const double[:, ::1] prior_gram,
                       int n, int d) noexcept nogil:
    cdef double ll, q, s
    cdef int j, k
    _eta(xt, beta, eta, n, d)
    ll = _loglik_eta(eta, y, w, phi, code, n)
    if prior_scale > 0.0:
        q = 0.0
        for j in range(1, d):
            s = 0.0
            for k in range(1, d):
                s += prior_gram[j - 1, k - 1] * beta[k]
            q += beta[j] * s
        ll -= 0.5 * prior_scale * q
    return ll


def loglik(const double[:, ::1] xt, const double[::1] beta, const double[::1] y,
           const double[::1] w, double phi, int code):
    cdef int n = xt.shape[0]
    cdef int d = xt.shape[1]
    cdef cnp.ndarray[double, ndim=1] eta = np.empty(n)
    _eta(xt, &beta[0], &eta[0], n, d)
    return _loglik_eta(<double*> eta.data, &y[0], &w[0], phi, code, n)


def iwls(const double[:, ::1] xt, const double[::1] y, const double[::1] w,
         double phi, int code, double c, double g, const double[::1] start,
         int max_iter, double tol, const double[:, ::1] prior_gram, bint one_step):
    cdef int n = xt.shape[0]
    cdef int d = xt.shape[1]
    cdef double prior_scale = 0.0 if isinf(g) else 1.0 / (g * phi * c)
    cdef cnp.ndarray[double, ndim=1] beta_arr = np.array(start, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] prop_arr = np.empty(d)
    cdef cnp.ndarray[double, ndim=1] rhs_arr = np.empty(d)
    cdef cnp.ndarray[double, ndim=1] eta_arr = np.empty(n)
    cdef cnp.ndarray[double, ndim=2] A_arr = np.empty((d, d))
    cdef cnp.ndarray[double, ndim=2] L_arr = np.empty((d, d))
    cdef double* beta = <double*> beta_arr.data
    cdef double* prop = <double*> prop_arr.data
    cdef double* rhs = <double*> rhs_arr.data
    cdef double* eta = <double*> eta_arr.data
    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] L = L_arr
    cdef double lj, lj_new, logdet, ll
    cdef int it = 0, halvings, j
    cdef int status = STATUS_MAX_ITER

    if one_step:
        _eta(xt, beta, eta, n, d)
        _assemble(xt, eta, &y[0], &w[0], phi, code, prior_scale, prior_gram, A, rhs, n, d)
        if _cholesky(A, L, d):
            return beta_arr, None, float("nan"), float("nan"), 0, STATUS_SINGULAR
        _cho_solve(L, rhs, prop, d)
        logdet = 0.0
        for j in range(d):
            logdet += 2.0 * log(L[j, j])
        _eta(xt, prop, eta, n, d)
        ll = _loglik_eta(eta, &y[0], &w[0], phi, code, n)
        return prop_arr, L_arr, logdet, ll, 1, STATUS_OK

    lj = _log_joint(xt, beta, eta, &y[0], &w[0], phi, code, prior_scale, prior_gram, n, d)
    if not isfinite(lj):
        return beta_arr, None, float("nan"), float("nan"), 0, STATUS_NONFINITE
    for it in range(1, max_iter + 1):
        _eta(xt, beta, eta, n, d)
        _assemble(xt, eta, &y[0], &w[0], phi, code, prior_scale, prior_gram, A, rhs, n, d)
        if _cholesky(A, L, d):
            return beta_arr, None, float("nan"), float("nan"), it, STATUS_SINGULAR
        _cho_solve(L, rhs, prop, d)
        lj_new = _log_joint(xt, prop, eta, &y[0], &w[0], phi, code, prior_scale, prior_gram, n, d)
        halvings = 0
        while (not isfinite(lj_new) or lj_new < lj - 1e-12) and halvings < 30:
            for j in range(d):
                prop[j] = 0.5 * (prop[j] + beta[j])
            lj_new = _log_joint(xt, prop, eta, &y[0], &w[0], phi, code, prior_scale,
                                prior_gram, n, d)
            halvings += 1
        if not isfinite(lj_new):
            return beta_arr, None, float("nan"), float("nan"), it, STATUS_NONFINITE
        for j in range(d):
            beta[j] = prop[j]
        if fabs(lj_new - lj) <= tol * max(1.0, fabs(lj_new)):
            lj = lj_new
            status = STATUS_OK
            break
        lj = lj_new
    _eta(xt, beta, eta, n, d)
    _assemble(xt, eta, &y[0], &w[0], phi, code, prior_scale, prior_gram, A, rhs, n, d)
    if _cholesky(A, L, d):
        return beta_arr, None, float("nan"), float("nan"), it, STATUS_SINGULAR
    logdet = 0.0
    for j in range(d):
        logdet += 2.0 * log(L[j, j])
    ll = _loglik_eta(eta, &y[0], &w[0], phi, code, n)
    return beta_arr, L_arr, logdet, ll, it, status


def correction_factor(const double[:, ::1] xt, const double[::1] beta,
                      const double[::1] w, double phi, int code,
                      const double[:, ::1] L):
    """Higher-order Laplace correction factor; canonical codes only."""
    cdef int n = xt.shape[0]
    cdef int d = xt.shape[1]
    cdef int i, j, k_
    cdef double eta, mu, d2, d3, d5, q, b, s, s3 = 0.0, s5 = 0.0, kRk = 0.0
    cdef cnp.ndarray[double, ndim=1] v_arr = np.empty(d)
    cdef cnp.ndarray[double, ndim=1] kvec_arr = np.zeros(d)
    cdef double* v = <double*> v_arr.data
    cdef double* kvec = <double*> kvec_arr.data
    if code == 0:
        return 1.0
    if code != 1 and code != 2:
        raise ValueError(f"correction undefined for family code {code}")
    for i in range(n):
        eta = 0.0
        for j in range(d):
            eta += xt[i, j] * beta[j]
        if code == 1:
            mu = _expit(eta)
            d2 = mu * (1.0 + mu * (-3.0 + mu * 2.0))
            d3 = mu * (1.0 + mu * (-7.0 + mu * (12.0 + mu * -6.0)))
            d5 = mu * (1.0 + mu * (-31.0 + mu * (180.0 + mu * (-390.0 + mu * (360.0 + mu * -120.0)))))
        else:
            d2 = d3 = d5 = exp(eta)
        # b_i = || L^-1 x_i ||^2 by forward substitution
        for j in range(d):
            s = xt[i, j]
            for k_ in range(j):
                s -= L[j, k_] * v[k_]
            v[j] = s / L[j, j]
        b = 0.0
        for j in range(d):
            b += v[j] * v[j]
        q = w[i] / phi
        s3 += q * d3 * b * b
        s5 += q * d5 * b * b * b
        for j in range(d):
            kvec[j] += q * d2 * b * xt[i, j]
    for j in range(d):
        s = kvec[j]
        for k_ in range(j):
            s -= L[j, k_] * v[k_]
        v[j] = s / L[j, j]
    for j in range(d):
        kRk += v[j] * v[j]
    return 1.0 - s3 / 8.0 - s5 / 48.0 + 5.0 / 24.0 * kRk
