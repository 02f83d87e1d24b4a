import math

import numpy as np
import pytest

from glmbma.exceptions import (
    ConstructionError,
    DataError,
    EvaluationError,
    UnsupportedOperationError,
)
from glmbma.families import (
    Dataset,
    Family,
    FamilyLink,
    Link,
    link_constant,
    log_likelihood,
    log_likelihood_terms,
    response_derivatives,
    response_derivatives_at,
)

CONSTRUCTIBLE = [
    (Family.GAUSSIAN, Link.IDENTITY, 1.0),
    (Family.POISSON, Link.LOG, 1.0),
    (Family.BERNOULLI, Link.LOGIT, 4.0),
    (Family.BERNOULLI, Link.PROBIT, math.pi / 2),
    (Family.BERNOULLI, Link.CAUCHIT, math.pi**2 / 4),
    (Family.BERNOULLI, Link.CLOGLOG, math.e - 1),
    (Family.GAMMA, Link.LOG, 1.0),
]


@pytest.mark.parametrize("family,link,c", CONSTRUCTIBLE)
def test_link_constants(family, link, c):
    assert link_constant(FamilyLink(family, link)) == pytest.approx(c, rel=0, abs=0)


@pytest.mark.parametrize(
    "family,link",
    [
        (Family.POISSON, Link.IDENTITY),
        (Family.GAUSSIAN, Link.LOG),
        (Family.INVERSE_GAUSSIAN, Link.LOG),
        (Family.GAMMA, Link.IDENTITY),
        (Family.POISSON, Link.LOGIT),
    ],
)
def test_unusable_pairs_rejected(family, link):
    with pytest.raises(ConstructionError):
        FamilyLink(family, link)


@pytest.mark.parametrize("family,link,c", CONSTRUCTIBLE)
def test_constant_consistent_with_variance_and_slope(family, link, c):
    """c must equal v(h(0)) / h'(0)^2 built from the pieces themselves."""
    fl = FamilyLink(family, link)
    h0 = fl.mean(0.0)
    recomputed = float(fl.variance(h0)) / float(fl.mean_deriv(0.0)) ** 2
    assert recomputed == pytest.approx(c, abs=1e-12)


@pytest.mark.parametrize("family,link,c", CONSTRUCTIBLE)
def test_mean_strictly_monotone_and_variance_positive(family, link, c, rng):
    # range chosen so float64 can still resolve the strict increase
    fl = FamilyLink(family, link)
    etas = np.sort(rng.uniform(-3, 3, size=40))
    mu = fl.mean(etas)
    assert np.all(np.diff(mu) > 0)
    assert np.all(fl.mean_deriv(etas) > 0)
    assert np.all(fl.variance(mu) > 0)


class TestLogLikelihood:
    def test_bernoulli_logit_single_success_at_zero(self):
        ds = Dataset(y=[1.0, 0.0], X_raw=[[0.1], [0.2]],
                     family_link=FamilyLink(Family.BERNOULLI, Link.LOGIT))
        terms = log_likelihood_terms(ds, np.array([0.0, 0.0]))
        assert terms[0] == pytest.approx(-math.log(2.0), abs=1e-15)

    def test_gaussian_perfect_fit_scores_zero(self, rng):
        X = rng.normal(size=(10, 2))
        beta = np.array([0.3, -1.0, 0.7])
        y = beta[0] + X @ beta[1:]
        ds = Dataset(y=y, X_raw=X, family_link=FamilyLink(Family.GAUSSIAN, Link.IDENTITY), phi=1.0)
        assert log_likelihood(ds, X, beta) == pytest.approx(0.0, abs=1e-12)

    def test_poisson_count_two_at_zero(self):
        ds = Dataset(y=[2.0, 1.0], X_raw=[[0.5], [1.0]],
                     family_link=FamilyLink(Family.POISSON, Link.LOG))
        terms = log_likelihood_terms(ds, np.array([0.0, 0.0]))
        assert terms[0] == pytest.approx(-1.0, abs=1e-15)

    def test_nonfinite_contribution_names_row(self):
        ds = Dataset(y=[2.0, 1.0], X_raw=[[0.5], [1.0]],
                     family_link=FamilyLink(Family.GAMMA, Link.LOG))
        with pytest.raises(EvaluationError, match="row 1"):
            log_likelihood(ds, np.array([[0.0], [-800.0]]), np.array([0.0, 1.0]))

    def test_coefficient_length_checked(self):
        ds = Dataset(y=[1.0, 2.0], X_raw=[[0.5], [1.0]],
                     family_link=FamilyLink(Family.GAUSSIAN, Link.IDENTITY))
        with pytest.raises(DataError):
            log_likelihood(ds, ds.X_raw, np.array([0.0, 1.0, 2.0]))


class TestResponseDerivatives:
    def test_logistic_values_at_zero(self):
        fl = FamilyLink(Family.BERNOULLI, Link.LOGIT)
        d = response_derivatives(fl, 0.0, 3)
        assert d[0] == pytest.approx(0.25, abs=0)
        assert d[1] == pytest.approx(0.0, abs=0)
        assert d[2] == pytest.approx(-0.125, abs=1e-15)

    def test_non_canonical_rejected(self):
        with pytest.raises(UnsupportedOperationError):
            response_derivatives(FamilyLink(Family.BERNOULLI, Link.PROBIT), 0.0, 2)
        with pytest.raises(ConstructionError):
            response_derivatives(FamilyLink(Family.BERNOULLI, Link.LOGIT), 0.0, 7)

    @pytest.mark.parametrize(
        "fl",
        [
            FamilyLink(Family.BERNOULLI, Link.LOGIT),
            FamilyLink(Family.POISSON, Link.LOG),
            FamilyLink(Family.GAUSSIAN, Link.IDENTITY),
        ],
    )
    def test_matches_central_finite_differences(self, fl, rng):
        """Orders 1..4 against Richardson-extrapolated central differences."""
        stencils = {
            1: np.array([1 / 12, -2 / 3, 0, 2 / 3, -1 / 12]),
            2: np.array([-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12]),
            3: np.array([-1 / 2, 1, 0, -1, 1 / 2]),
            4: np.array([1, -4, 6, -4, 1]),
        }
        base_h = {1: 1e-3, 2: 1e-2, 3: 2e-2, 4: 4e-2}

        def fd(eta, order, h):
            values = fl.mean(eta + np.arange(-2, 3) * h)
            return float(stencils[order] @ values) / h**order

        etas = rng.uniform(-2.0, 2.0, size=20)
        for eta in etas:
            got = response_derivatives(fl, float(eta), 4)
            for order in range(1, 5):
                h = base_h[order]
                coarse, fine = fd(eta, order, h), fd(eta, order, h / 2)
                extrapolated = fine + (fine - coarse) / 3.0
                assert got[order - 1] == pytest.approx(extrapolated, abs=1e-5)


@pytest.mark.parametrize(
    "family,link,y0",
    [
        (Family.BERNOULLI, Link.LOGIT, 0.5),
        (Family.POISSON, Link.LOG, 1.0),
        (Family.GAMMA, Link.LOG, 1.0),
        (Family.GAUSSIAN, Link.IDENTITY, 0.0),
    ],
)
def test_pseudo_observation_prior_mode_is_at_zero(family, link, y0, rng):
    """Responses fixed at h(0) with dispersion g*phi put the log-density
    mode of the implied coefficient prior exactly at zero."""
    n, p, g = 12, 3, 3.0
    X = rng.normal(size=(n, p))
    X -= X.mean(axis=0)
    if family is Family.BERNOULLI:
        ds = Dataset(y=np.full(n, y0), X_raw=X, w=np.full(n, 2.0),
                     family_link=FamilyLink(family, link), phi=g)
    else:
        ds = Dataset(y=np.full(n, y0), X_raw=X, family_link=FamilyLink(family, link), phi=g)
    h = 1e-5
    for j in range(p + 1):
        e = np.zeros(p + 1)
        e[j] = h
        grad = (log_likelihood(ds, X, e) - log_likelihood(ds, X, -e)) / (2 * h)
        assert abs(grad) < 1e-6


class TestDatasetValidation:
    def test_bernoulli_counts_must_be_integral(self):
        fl = FamilyLink(Family.BERNOULLI, Link.LOGIT)
        with pytest.raises(DataError):
            Dataset(y=[0.5, 0.0], X_raw=[[1.0], [2.0]], family_link=fl)
        ds = Dataset(y=[0.5, 0.0], X_raw=[[1.0], [2.0]], w=[2.0, 3.0], family_link=fl)
        assert ds.n == 2

    def test_weights_positive_phi_positive(self):
        fl = FamilyLink(Family.GAUSSIAN, Link.IDENTITY)
        with pytest.raises(DataError):
            Dataset(y=[1.0, 2.0], X_raw=[[1.0], [2.0]], w=[1.0, 0.0], family_link=fl)
        with pytest.raises(DataError):
            Dataset(y=[1.0, 2.0], X_raw=[[1.0], [2.0]], phi=-1.0, family_link=fl)

    def test_minimum_size(self):
        fl = FamilyLink(Family.GAUSSIAN, Link.IDENTITY)
        with pytest.raises(DataError):
            Dataset(y=[1.0], X_raw=[[1.0]], family_link=fl)

    def test_immutable_arrays(self):
        ds = Dataset(y=[1.0, 2.0], X_raw=[[1.0], [2.0]],
                     family_link=FamilyLink(Family.GAUSSIAN, Link.IDENTITY))
        with pytest.raises(ValueError):
            ds.y[0] = 5.0


def test_vectorized_single_order_matches_scalar_api(rng):
    fl = FamilyLink(Family.BERNOULLI, Link.LOGIT)
    etas = rng.normal(size=6)
    for order in range(1, 7):
        vec = response_derivatives_at(fl, etas, order)
        scalars = [response_derivatives(fl, float(e), order)[-1] for e in etas]
        assert np.allclose(vec, scalars, atol=0, rtol=1e-14)
