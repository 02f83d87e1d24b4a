"""Shared numerical machinery.

Gauss-Hermite rules via the Golub-Welsch eigenvalue method, a regularized
lower incomplete gamma function (series / continued-fraction split),
Ridders-extrapolated numerical second derivatives, bracket expansion for
univariate maximization, and panel-based 1-D integration on the log scale.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

from .exceptions import BracketError, ConstructionError, EvaluationError, OverflowRangeError

_EPS = np.finfo(float).eps


def golub_welsch_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point Gauss-Hermite rule (weight e^{-t^2}).

    Eigen-decomposition of the symmetric tridiagonal Jacobi matrix of the
    Hermite recurrence: nodes are the eigenvalues, weights are
    sqrt(pi) times the squared first components of the eigenvectors.
    """
    if not 1 <= n <= 64:
        raise ConstructionError(f"node count must be in 1..64, got {n}")
    if n == 1:
        return np.zeros(1), np.array([math.sqrt(math.pi)])
    diag = np.zeros(n)
    off = np.sqrt(np.arange(1, n) / 2.0)
    nodes, vectors = eigh_tridiagonal(diag, off)
    weights = math.sqrt(math.pi) * vectors[0] ** 2
    return nodes, weights


def gauss_hermite_log_scaled_weights(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes t_j and log(omega_j e^{t_j^2}) of the n-point Gauss-Hermite rule.

    Uses omega_j e^{t_j^2} = 1 / (n phi_{n-1}(t_j)^2) with phi_k the
    orthonormal Hermite functions, evaluated by their stable three-term
    recurrence; unlike the raw weights this never underflows, so large
    rules keep their extreme nodes.
    """
    nodes, _ = golub_welsch_hermite(n)
    x = nodes
    phi_prev = math.pi ** -0.25 * np.exp(-0.5 * x**2)
    if n == 1:
        return nodes, -np.log(n * phi_prev**2)
    phi = math.sqrt(2.0) * x * phi_prev
    for k in range(1, n - 1):
        phi, phi_prev = (
            x * math.sqrt(2.0 / (k + 1)) * phi - math.sqrt(k / (k + 1.0)) * phi_prev,
            phi,
        )
    return nodes, -math.log(n) - 2.0 * np.log(np.abs(phi))


def reg_lower_gamma(a: float, x: float, tol: float = 1e-14, max_iter: int = 500) -> float:
    """Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).

    Series representation for x < a + 1, Lentz continued fraction for the
    upper tail otherwise.
    """
    if a <= 0:
        raise ConstructionError(f"shape parameter must be positive, got {a}")
    if x < 0:
        raise ConstructionError(f"argument must be nonnegative, got {x}")
    if x == 0.0:
        return 0.0
    log_prefactor = a * math.log(x) - x - gammaln(a)
    if x < a + 1.0:
        # P(a,x) = prefactor * sum_k x^k / (a (a+1) ... (a+k))
        term = 1.0 / a
        total = term
        denom = a
        for _ in range(max_iter):
            denom += 1.0
            term *= x / denom
            total += term
            if abs(term) < abs(total) * tol:
                return min(1.0, math.exp(log_prefactor) * total)
        raise EvaluationError(f"incomplete gamma series failed to converge (a={a}, x={x})")
    # Q(a,x) by modified Lentz continued fraction, then P = 1 - Q.
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0 else 1.0 / tiny
    h = d
    for i in range(1, max_iter + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            q = math.exp(log_prefactor) * h
            return max(0.0, 1.0 - q)
    raise EvaluationError(f"incomplete gamma continued fraction failed to converge (a={a}, x={x})")


def log_reg_lower_gamma(a: float, x: float) -> float:
    """log P(a, x), guarding the x -> 0 underflow region."""
    p = reg_lower_gamma(a, x)
    if p > 0.0:
        return math.log(p)
    # tiny-x expansion: P(a,x) ~ x^a / (a Gamma(a+1)) ... leading term suffices
    return a * math.log(x) - math.log(a) - gammaln(a)


def ridders_second_derivative(
    f,
    x: float,
    h: float = 0.5,
    shrink: float = 1.4,
    max_stage: int = 10,
    target_error: float = 1e-6,
) -> tuple[float, float]:
    """Second derivative of ``f`` at ``x`` by Richardson-extrapolated central
    differences over a shrinking tableau of step sizes.

    Returns ``(value, error_estimate)``; stops early once the extrapolation
    error estimate drops below ``target_error``.
    """
    f0 = f(x)
    table = np.empty((max_stage, max_stage))
    shrink2 = shrink * shrink
    best = math.nan
    best_err = math.inf
    hh = h
    table[0, 0] = (f(x + hh) - 2.0 * f0 + f(x - hh)) / (hh * hh)
    for i in range(1, max_stage):
        hh /= shrink
        table[i, 0] = (f(x + hh) - 2.0 * f0 + f(x - hh)) / (hh * hh)
        factor = shrink2
        for j in range(1, i + 1):
            table[i, j] = (table[i, j - 1] * factor - table[i - 1, j - 1]) / (factor - 1.0)
            factor *= shrink2
            err = max(
                abs(table[i, j] - table[i, j - 1]),
                abs(table[i, j] - table[i - 1, j - 1]),
            )
            if err <= best_err:
                best_err = err
                best = table[i, j]
        if abs(table[i, i] - table[i - 1, i - 1]) >= 2.0 * best_err:
            break  # higher orders are amplifying noise
        if best_err < target_error:
            break
    if not math.isfinite(best):
        raise EvaluationError(f"second-derivative extrapolation failed at x={x}")
    return best, best_err


def expand_bracket(
    f,
    start: float,
    step: float = 2.0,
    low_cap: float = -30.0,
    high_cap: float = 30.0,
) -> tuple[float, float, float]:
    """Expand outward from ``start`` until ``f`` decreases on both sides.

    Returns ``(a, m, b)`` with a < m < b and f(m) >= max(f(a), f(b)).  Raises
    :class:`BracketError` when a cap is reached while ``f`` is still rising
    in that direction (no interior maximum in range).
    """
    start = min(max(start, low_cap + step), high_cap - step)
    xs = [start - step, start, start + step]
    fs = [f(x) for x in xs]
    # walk the current maximum outward until it is interior
    while True:
        k = int(np.argmax(fs))
        if 0 < k < len(xs) - 1:
            return xs[k - 1], xs[k], xs[k + 1]
        if k == 0:
            new_x = xs[0] - step
            if new_x < low_cap - 1e-12:
                raise BracketError(
                    f"no interior maximum above {low_cap}: function still rising at {xs[0]:.3g}",
                    side="low",
                )
            xs.insert(0, new_x)
            fs.insert(0, f(new_x))
        else:
            new_x = xs[-1] + step
            if new_x > high_cap + 1e-12:
                raise BracketError(
                    f"no interior maximum below {high_cap}: function still rising at {xs[-1]:.3g}",
                    side="high",
                )
            xs.append(new_x)
            fs.append(f(new_x))


def integrate_log_f(log_f, center: float, scale: float, rel_tol: float = 1e-12,
                    points_per_panel: int = 24, max_half_width: float = 400.0) -> float:
    """log of the integral of exp(log_f) over the real line.

    Composite Gauss-Legendre panels of width ``scale`` spreading outward from
    ``center`` until the outermost panels stop contributing relative mass.
    Intended for unimodal, exponentially decaying integrands.
    """
    gl_nodes, gl_weights = np.polynomial.legendre.leggauss(points_per_panel)

    def panel(a: float, b: float) -> float:
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        vals = np.array([log_f(mid + half * t) for t in gl_nodes])
        finite = np.isfinite(vals)
        if not finite.any():
            return -math.inf
        mx = vals[finite].max()
        return mx + math.log(float(np.sum(np.where(finite, np.exp(vals - mx), 0.0) * gl_weights)) * half)

    log_total = panel(center - scale, center + scale)
    k = 1
    while k * scale < max_half_width:
        left = panel(center - (k + 1) * scale, center - k * scale)
        right = panel(center + k * scale, center + (k + 1) * scale)
        addition = np.logaddexp(left, right)
        log_total = np.logaddexp(log_total, addition)
        if addition < log_total + math.log(rel_tol):
            return float(log_total)
        k += 1
    raise EvaluationError("1-D integral did not localize within the search range")


def weighted_quantile(values: np.ndarray, weights: np.ndarray, q) -> np.ndarray:
    """Quantiles of a weighted sample (inverse of the weighted empirical CDF)."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    return np.interp(np.atleast_1d(q), cdf, v)


def check_finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise OverflowRangeError(f"{what} left the floating-point range: {value}")
    return value
