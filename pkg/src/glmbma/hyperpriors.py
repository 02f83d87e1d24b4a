"""Proper continuous priors on the covariance factor g.

Built-in families: inverse-gamma IG(a, b); the heavy-tailed density
f(g) = (1/n)(1 + g/n)^-2; the incomplete inverse-gamma law, an IG(a, b) on
g + 1 truncated to g > 0; user-supplied log-densities; and an empirical-Bayes
marker for which no density exists.  Everything is exposed on both the g
scale and the z = log(g) scale (the extra + z term is the Jacobian).

Improper choices are rejected: evidence comparisons against the null model,
which has no g at all, require every prior here to integrate to one.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .exceptions import ConstructionError, GlmBmaError, OverflowRangeError, UnsupportedOperationError
from .numutil import integrate_log_f, log_reg_lower_gamma


class PriorKind(str, enum.Enum):
    INVERSE_GAMMA = "inverse_gamma"
    HYPER_G_OVER_N = "hyper_g_over_n"
    INCOMPLETE_INVERSE_GAMMA = "incomplete_inverse_gamma"
    CUSTOM = "custom"
    EMPIRICAL_BAYES = "empirical_bayes"


def log_iig_normalizer(a: float, b: float) -> float:
    """log M(a, b) with M(a, b) = b^a / integral_0^b t^(a-1) e^(-t) dt."""
    if a <= 0 or b <= 0:
        raise ConstructionError(f"need a > 0 and b > 0, got a={a}, b={b}")
    return a * math.log(b) - gammaln(a) - log_reg_lower_gamma(a, b)


def iig_normalizer(a: float, b: float) -> float:
    """Normalizing constant M(a, b) of the incomplete inverse-gamma density."""
    log_m = log_iig_normalizer(a, b)
    if abs(log_m) > math.log(np.finfo(float).max) - 1.0:
        raise OverflowRangeError(
            f"incomplete inverse-gamma normalizer overflows for a={a}, b={b} (log M = {log_m:.3g})"
        )
    return math.exp(log_m)


@dataclass(frozen=True)
class HyperPrior:
    """A proper prior for g, or the empirical-Bayes marker."""

    kind: PriorKind
    a: float | None = None
    b: float | None = None
    n: float | None = None
    log_pdf: Callable[[float], float] | None = field(default=None, repr=False)
    label: str = ""

    # -- constructors ------------------------------------------------------

    @staticmethod
    def inverse_gamma(a: float, b: float, label: str = "") -> "HyperPrior":
        if a <= 0 or b <= 0:
            raise ConstructionError(f"inverse-gamma needs a > 0, b > 0; got a={a}, b={b}")
        return HyperPrior(PriorKind.INVERSE_GAMMA, a=a, b=b, label=label or f"IG({a:g},{b:g})")

    @staticmethod
    def zellner_siow(n: int) -> "HyperPrior":
        """IG(1/2, n/2): the multivariate-Cauchy-equivalent choice (F1)."""
        if n < 1:
            raise ConstructionError(f"need n >= 1, got {n}")
        return HyperPrior(PriorKind.INVERSE_GAMMA, a=0.5, b=n / 2.0, label="F1")

    @staticmethod
    def hyper_g_over_n(n: float) -> "HyperPrior":
        """f(g) = (1/n) (1 + g/n)^-2 (F2)."""
        if n < 1:
            raise ConstructionError(f"need n >= 1, got {n}")
        return HyperPrior(PriorKind.HYPER_G_OVER_N, n=float(n), label="F2")

    @staticmethod
    def vague_inverse_gamma() -> "HyperPrior":
        """IG(0.001, 0.001), the conventional vague variance prior (F3)."""
        return HyperPrior(PriorKind.INVERSE_GAMMA, a=1e-3, b=1e-3, label="F3")

    @staticmethod
    def incomplete_inverse_gamma(a: float, b: float) -> "HyperPrior":
        if a <= 0 or b <= 0:
            raise ConstructionError(f"incomplete inverse-gamma needs a > 0, b > 0; got a={a}, b={b}")
        return HyperPrior(
            PriorKind.INCOMPLETE_INVERSE_GAMMA, a=a, b=b, label=f"IIG({a:g},{b:g})"
        )

    @staticmethod
    def custom(log_pdf: Callable[[float], float], label: str = "custom",
               normalization_tol: float = 1e-4) -> "HyperPrior":
        """Register a user density; verifies it integrates to one on (0, inf)."""
        hp = HyperPrior(PriorKind.CUSTOM, log_pdf=log_pdf, label=label)
        zs = np.arange(-40.0, 40.0, 2.0)
        center = float(zs[np.argmax([hp.log_density_z(z) for z in zs])])
        try:
            log_total = integrate_log_f(hp.log_density_z, center, 2.0, rel_tol=1e-12)
        except GlmBmaError as exc:
            raise ConstructionError(
                f"custom prior is not integrable on (0, inf): {exc}"
            ) from exc
        if abs(math.expm1(log_total)) > normalization_tol:
            raise ConstructionError(
                f"custom prior integrates to {math.exp(log_total):.6g}, not 1; refusing improper priors"
            )
        return hp

    @staticmethod
    def empirical_bayes() -> "HyperPrior":
        return HyperPrior(PriorKind.EMPIRICAL_BAYES, label="EB")

    # -- densities ---------------------------------------------------------

    @property
    def is_eb(self) -> bool:
        return self.kind is PriorKind.EMPIRICAL_BAYES

    def log_density_g(self, g: float) -> float:
        """Normalized log f(g); g must be positive."""
        if self.is_eb:
            raise UnsupportedOperationError("empirical Bayes has no prior density for g")
        if g <= 0:
            raise ConstructionError(f"g must be positive, got {g}")
        if self.kind is PriorKind.INVERSE_GAMMA:
            a, b = self.a, self.b
            return a * math.log(b) - gammaln(a) - (a + 1.0) * math.log(g) - b / g
        if self.kind is PriorKind.HYPER_G_OVER_N:
            return -math.log(self.n) - 2.0 * math.log1p(g / self.n)
        if self.kind is PriorKind.INCOMPLETE_INVERSE_GAMMA:
            a, b = self.a, self.b
            return log_iig_normalizer(a, b) - (a + 1.0) * math.log1p(g) - b / (g + 1.0)
        return float(self.log_pdf(g))

    def log_density_z(self, z: float) -> float:
        """Normalized log-density of z = log(g): log f(e^z) + z."""
        if self.is_eb:
            raise UnsupportedOperationError("empirical Bayes has no prior density for z")
        try:
            g = math.exp(z)
        except OverflowError:
            g = math.inf
        if g == 0.0 or math.isinf(g):
            # direct expansions where exp(z) leaves the float range
            if self.kind is PriorKind.INVERSE_GAMMA:
                a, b = self.a, self.b
                try:
                    tail = b * math.exp(-z)
                except OverflowError:
                    return -math.inf
                return a * math.log(b) - gammaln(a) - a * z - tail
            if self.kind is PriorKind.HYPER_G_OVER_N:
                return -math.log(self.n) + (z if g == 0.0 else -z + 2.0 * math.log(self.n))
            if self.kind is PriorKind.INCOMPLETE_INVERSE_GAMMA:
                a, b = self.a, self.b
                if g == 0.0:
                    return log_iig_normalizer(a, b) - b + z
                return log_iig_normalizer(a, b) - a * z
        return self.log_density_g(g) + z


def from_config(spec: dict, n: int) -> HyperPrior:
    """Build a prior from configuration keys.

    ``kind`` is one of F1, F2, F3, ig, iig or eb; ``a``/``b`` apply to the
    parametric kinds; F1 and F2 take their scale from the sample size.
    """
    kind = str(spec.get("kind", "")).strip()
    lowered = kind.lower()
    if lowered == "f1":
        return HyperPrior.zellner_siow(n)
    if lowered == "f2":
        return HyperPrior.hyper_g_over_n(n)
    if lowered == "f3":
        return HyperPrior.vague_inverse_gamma()
    if lowered == "iig":
        return HyperPrior.incomplete_inverse_gamma(float(spec["a"]), float(spec["b"]))
    if lowered == "ig":
        return HyperPrior.inverse_gamma(float(spec["a"]), float(spec["b"]))
    if lowered == "eb":
        return HyperPrior.empirical_bayes()
    raise ConstructionError(f"unknown hyperprior kind {kind!r} (expected F1/F2/F3/ig/iig/eb)")
