import math

import numpy as np
import pytest
from scipy.integrate import quad

from glmbma.exceptions import ConstructionError, UnsupportedOperationError
from glmbma.hyperpriors import HyperPrior, from_config, iig_normalizer, log_iig_normalizer

ALL_PROPER = [
    HyperPrior.zellner_siow(50),
    HyperPrior.hyper_g_over_n(50),
    HyperPrior.vague_inverse_gamma(),
    HyperPrior.incomplete_inverse_gamma(0.01, 0.01),
    HyperPrior.inverse_gamma(2.0, 3.0),
]


class TestIigNormalizer:
    def test_unit_shape_closed_form(self):
        # a=1: integral_0^1 e^-t dt = 1 - e^-1
        assert iig_normalizer(1.0, 1.0) == pytest.approx(1.0 / (1.0 - math.exp(-1.0)), rel=1e-12)

    def test_large_b_limit(self):
        # denominator -> Gamma(1) = 1, so M(1, b) -> b
        assert iig_normalizer(1.0, 50.0) == pytest.approx(50.0, abs=1e-10)

    def test_density_with_normalizer_integrates_to_one(self):
        a = b = 0.01
        hp = HyperPrior.incomplete_inverse_gamma(a, b)
        total, err = quad(lambda g: math.exp(hp.log_density_g(g)), 0, np.inf, limit=500)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_overflow_reported_not_inf(self):
        from glmbma.exceptions import OverflowRangeError

        with pytest.raises(OverflowRangeError):
            iig_normalizer(400.0, 1e5)

    def test_parameter_validation(self):
        with pytest.raises(ConstructionError):
            log_iig_normalizer(0.0, 1.0)


class TestDensities:
    def test_heavy_tail_prior_spot_value(self):
        hp = HyperPrior.hyper_g_over_n(1)
        assert hp.log_density_g(1.0) == pytest.approx(math.log(0.25), abs=1e-14)
        assert hp.log_density_z(0.0) == pytest.approx(math.log(0.25), abs=1e-14)

    def test_iig_spot_value_near_origin(self):
        a = b = 0.01
        hp = HyperPrior.incomplete_inverse_gamma(a, b)
        g = 1e-13
        expected = log_iig_normalizer(a, b) - b  # (g+1)^{-(a+1)} -> 1
        assert hp.log_density_g(g) == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize("hp", ALL_PROPER, ids=lambda h: h.label)
    def test_proper_on_g_scale(self, hp):
        total, _ = quad(lambda g: math.exp(hp.log_density_g(g)), 0, np.inf, limit=500)
        assert total == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("hp", ALL_PROPER, ids=lambda h: h.label)
    def test_proper_on_z_scale(self, hp):
        total, _ = quad(lambda z: math.exp(hp.log_density_z(z)), -np.inf, np.inf, limit=800)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_random_parameter_draws_stay_normalized(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            a, b = rng.uniform(0.05, 5.0, size=2)
            for hp in (HyperPrior.inverse_gamma(a, b),
                       HyperPrior.incomplete_inverse_gamma(a, b),
                       HyperPrior.hyper_g_over_n(float(rng.integers(1, 500)))):
                total, _ = quad(lambda g: math.exp(hp.log_density_g(g)), 0, np.inf, limit=500)
                assert total == pytest.approx(1.0, abs=1e-6), hp.label

    @pytest.mark.parametrize("hp", ALL_PROPER, ids=lambda h: h.label)
    def test_change_of_variable_identity(self, hp, rng):
        # checked where the density magnitude leaves float headroom for the
        # subtraction; the implementation forms log f(e^z) + z directly
        for z in rng.uniform(0.0, 8.0, size=12):
            lhs = hp.log_density_z(float(z)) - hp.log_density_g(math.exp(float(z)))
            assert lhs == pytest.approx(float(z), abs=1e-14)
        for z in rng.uniform(-5.0, 0.0, size=12):
            lhs = hp.log_density_z(float(z)) - hp.log_density_g(math.exp(float(z)))
            assert lhs == pytest.approx(float(z), abs=1e-12)

    def test_zellner_siow_z_mode_matches_stationarity(self):
        # z-density of IG(a,b) is exp(-a z - b e^{-z}) up to constants:
        # stationary point at z = log(b/a)
        hp = HyperPrior.inverse_gamma(0.5, 0.5)
        zs = np.linspace(-10, 10, 200001)
        dens = np.array([hp.log_density_z(z) for z in zs])
        assert zs[np.argmax(dens)] == pytest.approx(math.log(0.5 / 0.5), abs=1e-3)

    def test_domain_errors(self):
        hp = HyperPrior.zellner_siow(10)
        with pytest.raises(ConstructionError):
            hp.log_density_g(-1.0)
        eb = HyperPrior.empirical_bayes()
        with pytest.raises(UnsupportedOperationError):
            eb.log_density_g(1.0)
        with pytest.raises(UnsupportedOperationError):
            eb.log_density_z(0.0)


class TestCustomPriors:
    def test_registered_proper_density_accepted(self):
        lam = 0.2

        def log_pdf(g):  # exponential density on (0, inf)
            return math.log(lam) - lam * g

        hp = HyperPrior.custom(log_pdf, label="exp")
        assert hp.log_density_g(1.0) == pytest.approx(math.log(lam) - lam)

    def test_improper_density_rejected(self):
        with pytest.raises(ConstructionError):
            HyperPrior.custom(lambda g: -0.75 * math.log(g), label="g^-3/4")

    def test_unnormalized_density_rejected(self):
        with pytest.raises(ConstructionError):
            HyperPrior.custom(lambda g: math.log(2.0) - g, label="2e^-g... wrong mass")


class TestConfig:
    def test_named_kinds(self):
        assert from_config({"kind": "F1"}, 50).a == 0.5
        assert from_config({"kind": "F1"}, 50).b == 25.0
        assert from_config({"kind": "F2"}, 50).n == 50.0
        assert from_config({"kind": "F3"}, 50).a == pytest.approx(1e-3)
        iig = from_config({"kind": "iig", "a": 0.1, "b": 0.2}, 50)
        assert (iig.a, iig.b) == (0.1, 0.2)
        assert from_config({"kind": "eb"}, 50).is_eb

    def test_unknown_kind(self):
        with pytest.raises(ConstructionError):
            from_config({"kind": "flat"}, 50)
