"""Exponential families, response functions, and log-likelihood kernels.

A :class:`FamilyLink` pairs a one-parameter exponential family with a
response function (inverse link) ``h``.  Only pairs for which the implied
shrinkage-prior construction is sound are constructible; in particular
poisson-identity, gaussian-log and inverse_gaussian-log are rejected, which
leaves the inverse Gaussian family without any usable link.

The log-likelihood kernel is ``sum_i w_i (y_i theta_i - b(theta_i)) / phi``
with canonical parameter ``theta_i`` implied by ``mu_i = h(eta_i)``.  The
constant convention used throughout the package: data-only normalization
terms (binomial coefficients, factorials, ``-0.5 log(2 pi phi / w)``) are
omitted, except that the Gaussian kernel absorbs ``-w y^2/(2 phi)`` so a
perfect fit scores exactly zero.  All evidence values in this package share
this convention, so it cancels in every Bayes factor and posterior model
probability.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_ndtr, ndtr

from .exceptions import ConstructionError, DataError, EvaluationError, UnsupportedOperationError


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"
    POISSON = "poisson"
    GAMMA = "gamma"
    INVERSE_GAUSSIAN = "inverse-gaussian"


class Link(str, enum.Enum):
    IDENTITY = "identity"
    LOGIT = "logit"
    PROBIT = "probit"
    CLOGLOG = "cloglog"
    CAUCHIT = "cauchit"
    LOG = "log"


# Constructible pairs with their prior scaling constant c = v(h(0)) / h'(0)^2.
_LINK_CONSTANT = {
    (Family.GAUSSIAN, Link.IDENTITY): 1.0,
    (Family.POISSON, Link.LOG): 1.0,
    (Family.BERNOULLI, Link.LOGIT): 4.0,
    (Family.BERNOULLI, Link.PROBIT): math.pi / 2.0,
    (Family.BERNOULLI, Link.CAUCHIT): math.pi ** 2 / 4.0,
    (Family.BERNOULLI, Link.CLOGLOG): math.e - 1.0,
    (Family.GAMMA, Link.LOG): 1.0,
}

# Pairs that exist in the literature but break the construction (the prior
# mode at zero is not guaranteed, or c degenerates); rejected outright.
_REJECTED = {
    (Family.POISSON, Link.IDENTITY),
    (Family.GAUSSIAN, Link.LOG),
    (Family.INVERSE_GAUSSIAN, Link.LOG),
}

_CANONICAL = {
    (Family.GAUSSIAN, Link.IDENTITY),
    (Family.BERNOULLI, Link.LOGIT),
    (Family.POISSON, Link.LOG),
}


@dataclass(frozen=True)
class FamilyLink:
    """A constructible family/response-function pair."""

    family: Family
    link: Link

    def __post_init__(self):
        family = Family(self.family)
        link = Link(self.link)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "link", link)
        if (family, link) in _REJECTED:
            raise ConstructionError(
                f"{family.value}-{link.value} is not usable: the shrinkage prior "
                "construction is unsound for this pair"
            )
        if (family, link) not in _LINK_CONSTANT:
            raise ConstructionError(
                f"no supported model for family={family.value!r}, link={link.value!r}"
            )

    @property
    def canonical(self) -> bool:
        """True iff h equals db/dtheta, so theta_i = eta_i."""
        return (self.family, self.link) in _CANONICAL

    @property
    def name(self) -> str:
        return f"{self.family.value}-{self.link.value}"

    # -- response function h and its first derivative ---------------------

    def mean(self, eta):
        """h(eta): linear predictor to mean."""
        eta = np.asarray(eta, dtype=float)
        link = self.link
        if link is Link.IDENTITY:
            return eta.copy()
        if link is Link.LOGIT:
            return expit(eta)
        if link is Link.PROBIT:
            return ndtr(eta)
        if link is Link.CLOGLOG:
            return -np.expm1(-np.exp(eta))
        if link is Link.CAUCHIT:
            return np.arctan(eta) / math.pi + 0.5
        if link is Link.LOG:
            return np.exp(eta)
        raise AssertionError(link)

    def mean_deriv(self, eta):
        """dh/deta, strictly positive on the link's domain."""
        eta = np.asarray(eta, dtype=float)
        link = self.link
        if link is Link.IDENTITY:
            return np.ones_like(eta)
        if link is Link.LOGIT:
            mu = expit(eta)
            return mu * (1.0 - mu)
        if link is Link.PROBIT:
            return np.exp(-0.5 * eta ** 2) / math.sqrt(2.0 * math.pi)
        if link is Link.CLOGLOG:
            return np.exp(eta - np.exp(eta))
        if link is Link.CAUCHIT:
            return 1.0 / (math.pi * (1.0 + eta ** 2))
        if link is Link.LOG:
            return np.exp(eta)
        raise AssertionError(link)

    def variance(self, mu):
        """Variance function v(mu) of the family."""
        mu = np.asarray(mu, dtype=float)
        family = self.family
        if family is Family.GAUSSIAN:
            return np.ones_like(mu)
        if family is Family.BERNOULLI:
            return mu * (1.0 - mu)
        if family is Family.POISSON:
            return mu
        if family is Family.GAMMA:
            return mu ** 2
        raise AssertionError(family)

    @property
    def mean_at_zero(self) -> float:
        return float(self.mean(0.0))


def link_constant(fl: FamilyLink) -> float:
    """Prior scaling constant c = v(h(0)) * (dh/deta(0))^-2 for the pair."""
    return _LINK_CONSTANT[(fl.family, fl.link)]


# ---------------------------------------------------------------------------
# Log-likelihood kernels
# ---------------------------------------------------------------------------

def log_likelihood_eta(ds: "Dataset", eta) -> float:
    """Log-likelihood kernel at linear predictor values ``eta``.

    See the module docstring for the additive-constant convention.
    """
    terms = log_likelihood_terms(ds, eta)
    bad = np.flatnonzero(~np.isfinite(terms))
    if bad.size:
        raise EvaluationError(
            f"non-finite log-likelihood contribution at row {int(bad[0])} "
            f"(eta={float(np.asarray(eta, dtype=float)[bad[0]]):.6g})"
        )
    return float(terms.sum())


def log_likelihood_terms(ds: "Dataset", eta) -> np.ndarray:
    """Per-observation log-likelihood kernel contributions."""
    eta = np.asarray(eta, dtype=float)
    y, w, phi = ds.y, ds.w, ds.phi
    fl = ds.family_link
    family, link = fl.family, fl.link
    with np.errstate(all="ignore"):
        if family is Family.GAUSSIAN:
            return -w * (y - eta) ** 2 / (2.0 * phi)
        if family is Family.BERNOULLI:
            if link is Link.LOGIT:
                ll = y * eta - np.logaddexp(0.0, eta)
            elif link is Link.PROBIT:
                ll = y * log_ndtr(eta) + (1.0 - y) * log_ndtr(-eta)
            elif link is Link.CLOGLOG:
                # log mu = log(-expm1(-exp(eta))), log(1-mu) = -exp(eta)
                ll = y * np.log(-np.expm1(-np.exp(eta))) - (1.0 - y) * np.exp(eta)
            else:  # cauchit
                mu = fl.mean(eta)
                ll = y * np.log(mu) + (1.0 - y) * np.log1p(-mu)
            return w * ll / phi
        if family is Family.POISSON:
            return w * (y * eta - np.exp(eta)) / phi
        if family is Family.GAMMA:
            # theta = -exp(-eta), b(theta) = eta
            return w * (-y * np.exp(-eta) - eta) / phi
    raise AssertionError(family)


def log_likelihood(ds: "Dataset", design, beta) -> float:
    """Log-likelihood kernel at coefficients ``beta = (beta0, slopes)``.

    ``design`` is a centered n x p matrix or anything exposing
    ``X_centered``; ``beta`` has length p + 1.
    """
    X = getattr(design, "X_centered", design)
    X = np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if X.shape[0] != ds.n:
        raise DataError(f"design has {X.shape[0]} rows, dataset has {ds.n}")
    if beta.shape[0] != X.shape[1] + 1:
        raise DataError(
            f"expected {X.shape[1] + 1} coefficients (intercept + slopes), got {beta.shape[0]}"
        )
    eta = beta[0] + (X @ beta[1:] if X.shape[1] else 0.0)
    return log_likelihood_eta(ds, np.broadcast_to(eta, (ds.n,)))


# ---------------------------------------------------------------------------
# Higher derivatives of the canonical response functions
# ---------------------------------------------------------------------------

def _logistic_derivative_polys(max_order: int):
    """Coefficients of d^m expit/d eta^m as polynomials in mu = expit(eta).

    Uses d/d eta P(mu) = P'(mu) * (mu - mu^2); coefficients stay integral.
    """
    polys = []
    current = np.array([0.0, 1.0, -1.0])  # mu - mu^2
    polys.append(current)
    for _ in range(max_order - 1):
        dp = np.arange(1, current.size) * current[1:]  # P'(u)
        res = np.zeros(dp.size + 2)
        res[1 : 1 + dp.size] += dp
        res[2 : 2 + dp.size] -= dp
        polys.append(res)
        current = res
    return polys


_LOGISTIC_POLYS = _logistic_derivative_polys(6)


def response_derivatives(fl: FamilyLink, eta: float, max_order: int) -> np.ndarray:
    """Analytic derivatives d^m h / d eta^m at ``eta``, m = 1..max_order.

    Defined only for canonical response functions; orders up to 6 are
    available, which is what the higher-order evidence correction needs.
    """
    if not fl.canonical:
        raise UnsupportedOperationError(
            f"response derivatives are only defined for canonical pairs, not {fl.name}"
        )
    if not 1 <= max_order <= 6:
        raise ConstructionError(f"max_order must be in 1..6, got {max_order}")
    if fl.link is Link.IDENTITY:
        out = np.zeros(max_order)
        out[0] = 1.0
        return out
    if fl.link is Link.LOG:
        return np.full(max_order, math.exp(eta))
    mu = float(expit(eta))
    return np.array(
        [float(np.polynomial.polynomial.polyval(mu, p)) for p in _LOGISTIC_POLYS[:max_order]]
    )


def response_derivatives_at(fl: FamilyLink, eta: np.ndarray, order: int) -> np.ndarray:
    """Vectorized single-order variant of :func:`response_derivatives`."""
    if not fl.canonical:
        raise UnsupportedOperationError(
            f"response derivatives are only defined for canonical pairs, not {fl.name}"
        )
    eta = np.asarray(eta, dtype=float)
    if fl.link is Link.IDENTITY:
        return np.ones_like(eta) if order == 1 else np.zeros_like(eta)
    if fl.link is Link.LOG:
        return np.exp(eta)
    mu = expit(eta)
    return np.polynomial.polynomial.polyval(mu, _LOGISTIC_POLYS[order - 1])


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------

def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Dataset:
    """Immutable analysis input: response, raw covariates, weights, dispersion.

    For the Bernoulli family ``y`` holds observed proportions and ``w`` the
    trial counts, so ``w * y`` must be integral success counts.
    """

    y: np.ndarray
    X_raw: np.ndarray
    family_link: FamilyLink
    w: np.ndarray | None = None
    phi: float = 1.0
    covariate_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        y = _frozen_array(np.atleast_1d(self.y))
        X = np.asarray(self.X_raw, dtype=float)
        if X.ndim != 2:
            raise DataError("X_raw must be a 2-D array")
        X = _frozen_array(X)
        n, m = X.shape
        if n < 2 or m < 1:
            raise DataError(f"need n >= 2 and m >= 1, got n={n}, m={m}")
        if y.shape != (n,):
            raise DataError(f"y has length {y.shape[0]}, X_raw has {n} rows")
        w = self.w
        w = _frozen_array(np.ones(n) if w is None else np.broadcast_to(np.asarray(w, dtype=float), (n,)))
        if np.any(w <= 0):
            raise DataError("all weights must be strictly positive")
        phi = float(self.phi)
        if not phi > 0:
            raise DataError(f"dispersion must be positive, got {phi}")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
            raise DataError("response and covariates must be finite")
        fam = self.family_link.family
        if fam is Family.BERNOULLI:
            if np.any((y < 0) | (y > 1)):
                raise DataError("bernoulli responses must be proportions in [0, 1]")
            counts = w * y
            if np.any(np.abs(counts - np.round(counts)) > 1e-8):
                raise DataError("bernoulli: w*y must be integral success counts")
            if np.any(counts > w + 1e-8):
                raise DataError("bernoulli: success counts cannot exceed trials")
        elif fam is Family.POISSON:
            if np.any(y < 0):
                raise DataError("poisson responses must be nonnegative")
        elif fam is Family.GAMMA:
            if np.any(y <= 0):
                raise DataError("gamma responses must be strictly positive")
        names = tuple(self.covariate_names) or tuple(f"x{j + 1}" for j in range(m))
        if len(names) != m:
            raise DataError(f"{len(names)} covariate names for {m} covariates")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X_raw", X)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.X_raw.shape[0]

    @property
    def m(self) -> int:
        return self.X_raw.shape[1]

    @property
    def sum_w(self) -> float:
        return float(self.w.sum())
