"""Tuning-free Metropolis-Hastings sampling of (beta0, slopes, z) and the
posterior-ordinate evidence estimate.

The proposal factorizes as q(z') q(beta' | z', beta): an independence
proposal for z built by linear interpolation of the already-computed
z-grid (its CDF is piecewise quadratic, so inverse sampling is a per-segment
quadratic solve), and a Gaussian coefficient proposal from a single
weighted-least-squares step at the proposed g'.  Evaluating the reverse
kernel needs one more step from the proposed coefficients at the current g,
so the proposal is never tuned by hand and acceptance rates track how well
the z-grid matches the true posterior.

The evidence estimator divides the joint density at a fixed high-posterior
point theta* by an estimate of its posterior ordinate: acceptance-weighted
kernel values over the chain draws in the numerator, mean acceptance of
fresh proposals from theta* in the denominator.  Each term costs two extra
least-squares steps, four per sample in total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .exceptions import ConstructionError, EvaluationError, SingularMatrixError
from .families import Dataset, link_constant
from .hyperpriors import HyperPrior
from .evidence import DEFAULT_NODES, MargLikResult, ModelWorkspace, default_order
from .iwls import GaussApprox

_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Piecewise-linear independence proposal for z
# ---------------------------------------------------------------------------

class ZProposal:
    """Normalized piecewise-linear density through (z, log joint) knots."""

    def __init__(self, knots_z: np.ndarray, density: np.ndarray, total: float):
        self.knots_z = knots_z
        self.density = density
        widths = np.diff(knots_z)
        segment_mass = 0.5 * (density[:-1] + density[1:]) * widths
        self.cdf = np.concatenate(([0.0], np.cumsum(segment_mass)))
        # guard cumulative rounding
        self.cdf /= self.cdf[-1]
        self.total = total

    @staticmethod
    def from_grid(grid, mode_point=None) -> "ZProposal":
        """Build from (z, log value) pairs; the mode point is merged in."""
        points = list(grid)
        if mode_point is not None:
            points.append(tuple(mode_point))
        points.sort(key=lambda t: t[0])
        zs, logs = [], []
        for z, lv in points:
            if zs and abs(z - zs[-1]) < 1e-12:
                continue
            zs.append(float(z))
            logs.append(float(lv))
        if len(zs) < 2:
            raise ConstructionError("z-proposal needs at least two distinct knots")
        zs = np.array(zs)
        logs = np.array(logs)
        if not np.all(np.isfinite(zs)) or np.any(np.isnan(logs)):
            raise ConstructionError("z-proposal knots must be finite")
        vals = np.exp(logs - logs.max())
        total = float(np.trapezoid(vals, zs))
        if not total > 0.0:
            raise ConstructionError("z-proposal grid is degenerate (zero mass)")
        return ZProposal(zs, vals / total, total)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.knots_z[0]), float(self.knots_z[-1])

    def logpdf(self, z: float) -> float:
        lo, hi = self.support
        if z < lo or z > hi:
            return -math.inf
        d = float(np.interp(z, self.knots_z, self.density))
        return math.log(d) if d > 0.0 else -math.inf

    def sample(self, rng: np.random.Generator) -> float:
        u = float(rng.random())
        j = int(np.searchsorted(self.cdf, u, side="right") - 1)
        j = min(max(j, 0), len(self.knots_z) - 2)
        z0, z1 = self.knots_z[j], self.knots_z[j + 1]
        d0, d1 = self.density[j], self.density[j + 1]
        need = u - self.cdf[j]
        width = z1 - z0
        slope = (d1 - d0) / width
        # solve 0.5 slope t^2 + d0 t = need for t in [0, width]
        if abs(slope) < 1e-14 * max(d0, 1e-300):
            t = need / d0 if d0 > 0 else width
        else:
            disc = d0 * d0 + 2.0 * slope * need
            t = (math.sqrt(max(disc, 0.0)) - d0) / slope
        return float(z0 + min(max(t, 0.0), width))


def build_z_proposal(grid, mode_point=None) -> ZProposal:
    return ZProposal.from_grid(grid, mode_point)


# ---------------------------------------------------------------------------
# Chain configuration and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainConfig:
    burn_in: int = 1000
    n_samples: int = 4500
    thin: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.burn_in < 0 or self.n_samples <= 0 or self.thin < 1:
            raise ConstructionError(
                f"invalid chain configuration: burn_in={self.burn_in}, "
                f"n_samples={self.n_samples}, thin={self.thin}"
            )


@dataclass(frozen=True)
class PosteriorDraws:
    """Sampled (beta0, slopes, z) with per-draw log-likelihoods."""

    samples: np.ndarray
    loglik: np.ndarray
    acceptance_rate: float
    n_numerical_rejects: int
    z_fixed: float | None = None

    @property
    def betas(self) -> np.ndarray:
        return self.samples[:, :-1]

    @property
    def zs(self) -> np.ndarray:
        return self.samples[:, -1]

    def to_csv(self, path):
        p = self.samples.shape[1] - 2
        header = ",".join(["beta0"] + [f"beta_{j + 1}" for j in range(p)] + ["z", "loglik"])
        data = np.column_stack([self.samples, self.loglik])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


@dataclass
class _State:
    beta: np.ndarray
    z: float
    loglik: float
    log_prior: float  # slope prior + z prior (with Jacobian); 0-dim parts cached


class ModelSampler:
    """Holds the per-model pieces shared by chain steps and the evidence
    estimator: design caches, the z proposal, and prior constants."""

    def __init__(self, ds: Dataset, design, hp: HyperPrior,
                 order: int | None = None, n_nodes: int = DEFAULT_NODES,
                 marglik: MargLikResult | None = None):
        self.ws = ModelWorkspace(ds, design)
        if self.ws.p < 1:
            raise ConstructionError(
                "sampling needs at least one covariate column; the intercept-only "
                "model has a closed-form evidence and no g to sample"
            )
        self.ds = ds
        self.hp = hp
        self.order = default_order(ds) if order is None else order
        self.c = link_constant(ds.family_link)
        self.code = self.ws.code
        if hp.is_eb:
            g_hat, _ = self.ws.eb_optimize(self.order)
            if g_hat <= 0.0:
                raise EvaluationError("empirical-Bayes g collapsed to zero; nothing to sample")
            self.z_fixed = math.log(g_hat)
            self.zprop = None
            mode_approx = self.ws.gauss_approx(g_hat)
        else:
            self.ml = marglik if marglik is not None else self.ws.log_marglik(hp, self.order, n_nodes)
            self.zprop = build_z_proposal(self.ml.grid, (self.ml.z_star, self.ml.log_joint_at_mode))
            self.z_fixed = None
            mode_approx = self.ws.gauss_approx(math.exp(self.ml.z_star))
        self.mode_beta = mode_approx.mean

    # -- density pieces ----------------------------------------------------

    def loglik(self, beta: np.ndarray) -> float:
        return kernels.loglik(self.ws.xt, beta, self.ds.y, self.ds.w, self.ds.phi, self.code)

    def log_prior_beta(self, beta: np.ndarray, g: float) -> float:
        p = self.ws.p
        gphic = g * self.ds.phi * self.c
        slopes = beta[1:]
        qf = float(slopes @ (self.ws.prior_gram @ slopes)) / gphic
        return -0.5 * p * math.log(2.0 * math.pi * gphic) + self.ws.half_logdet_gram - 0.5 * qf

    def log_prior(self, beta: np.ndarray, z: float) -> float:
        """Slope prior at g = e^z plus the z prior including its Jacobian."""
        value = self.log_prior_beta(beta, math.exp(z))
        if self.z_fixed is None:
            value += self.hp.log_density_z(z)
        return value

    def one_step(self, z: float, from_beta: np.ndarray) -> GaussApprox:
        beta, L, logdet, ll, _, status = kernels.iwls(
            self.ws.xt, self.ds.y, self.ds.w, self.ds.phi, self.code, self.c,
            math.exp(z), from_beta, 1, 1e-10, self.ws.prior_gram, True,
        )
        if status != kernels.STATUS_OK:
            raise SingularMatrixError("one-step working precision not positive definite")
        return GaussApprox(beta, L, logdet, ll, 1)

    def initial_state(self) -> _State:
        z0 = self.z_fixed if self.z_fixed is not None else self.ml.z_star
        beta0 = self.mode_beta
        return _State(beta0, z0, self.loglik(beta0), self.log_prior(beta0, z0))

    # -- Metropolis-Hastings -----------------------------------------------

    def propose(self, state: _State, rng: np.random.Generator):
        """Draw a proposal and return (state', log acceptance ratio)."""
        z_new = state.z if self.z_fixed is not None else self.zprop.sample(rng)
        fwd = self.one_step(z_new, state.beta)
        beta_new = fwd.sample(rng)
        rev = self.one_step(state.z, beta_new)
        ll_new = self.loglik(beta_new)
        lp_new = self.log_prior(beta_new, z_new)
        log_q_fwd = fwd.logpdf(beta_new)
        log_q_rev = rev.logpdf(state.beta)
        if self.z_fixed is None:
            log_q_fwd += self.zprop.logpdf(z_new)
            log_q_rev += self.zprop.logpdf(state.z)
        log_ratio = (ll_new + lp_new) - (state.loglik + state.log_prior) + log_q_rev - log_q_fwd
        return _State(beta_new, z_new, ll_new, lp_new), log_ratio

    def step(self, state: _State, rng: np.random.Generator):
        """One MH transition; numerical failures reject the move."""
        try:
            candidate, log_ratio = self.propose(state, rng)
        except (SingularMatrixError, EvaluationError):
            return state, False, True
        if math.log(rng.random()) < min(0.0, log_ratio):
            return candidate, True, False
        return state, False, False

    def log_accept(self, current: _State, candidate: _State) -> float:
        """log alpha of moving current -> candidate (both fully evaluated)."""
        fwd = self.one_step(candidate.z, current.beta)
        rev = self.one_step(current.z, candidate.beta)
        log_q_fwd = fwd.logpdf(candidate.beta)
        log_q_rev = rev.logpdf(current.beta)
        if self.z_fixed is None:
            log_q_fwd += self.zprop.logpdf(candidate.z)
            log_q_rev += self.zprop.logpdf(current.z)
        return min(
            0.0,
            (candidate.loglik + candidate.log_prior)
            - (current.loglik + current.log_prior)
            + log_q_rev
            - log_q_fwd,
        )


def run_chain(ds: Dataset, design, hp: HyperPrior, cfg: ChainConfig,
              order: int | None = None, n_nodes: int = DEFAULT_NODES,
              marglik: MargLikResult | None = None) -> PosteriorDraws:
    """Run the sampler; deterministic in the seed, burn-in and thinning applied."""
    sampler = ModelSampler(ds, design, hp, order, n_nodes, marglik)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    state = sampler.initial_state()
    p = sampler.ws.p
    out = np.empty((cfg.n_samples, p + 2))
    logliks = np.empty(cfg.n_samples)
    accepted = 0
    proposals = 0
    numerical = 0
    stored = 0
    total = cfg.burn_in + cfg.n_samples * cfg.thin
    for it in range(total):
        state, ok, num_reject = sampler.step(state, rng)
        if it >= cfg.burn_in:
            proposals += 1
            accepted += ok
            numerical += num_reject
            if (it - cfg.burn_in + 1) % cfg.thin == 0 and stored < cfg.n_samples:
                out[stored, :p + 1] = state.beta
                out[stored, p + 1] = state.z
                logliks[stored] = state.loglik
                stored += 1
    return PosteriorDraws(
        samples=out,
        loglik=logliks,
        acceptance_rate=accepted / max(proposals, 1),
        n_numerical_rejects=numerical,
        z_fixed=sampler.z_fixed,
    )


def chib_jeliazkov(ds: Dataset, design, hp: HyperPrior, draws: PosteriorDraws,
                   cfg: ChainConfig, order: int | None = None,
                   n_nodes: int = DEFAULT_NODES,
                   marglik: MargLikResult | None = None,
                   theta_star: tuple[np.ndarray, float] | None = None,
                   n_batches: int = 20) -> tuple[float, float]:
    """Posterior-ordinate evidence estimate and its Monte Carlo standard error.

    The numerator averages alpha(theta*|draw) q(theta*|draw) over the chain;
    the denominator averages alpha(proposal|theta*) over fresh draws from
    q(.|theta*).  The standard error comes from batch means over both
    averages jointly.
    """
    sampler = ModelSampler(ds, design, hp, order, n_nodes, marglik)
    if theta_star is None:
        star = sampler.initial_state()
    else:
        beta_star, z_star = theta_star
        beta_star = np.asarray(beta_star, dtype=float)
        star = _State(beta_star, float(z_star), sampler.loglik(beta_star),
                      sampler.log_prior(beta_star, float(z_star)))
    if not math.isfinite(star.loglik + star.log_prior):
        raise EvaluationError("theta* has non-finite posterior density")
    B = draws.samples.shape[0]
    log_joint_all = draws.loglik + np.array(
        [sampler.log_prior(draws.samples[j, :-1], draws.samples[j, -1]) for j in range(B)]
    )
    star_joint = star.loglik + star.log_prior
    log_num_terms = np.empty(B)
    for j in range(B):
        beta_j = draws.samples[j, :-1]
        z_j = draws.samples[j, -1]
        to_star = sampler.one_step(star.z, beta_j)     # q(theta* | theta_j) moments
        from_star = sampler.one_step(z_j, star.beta)   # q(theta_j | theta*) moments
        log_q_star = to_star.logpdf(star.beta)
        log_q_j = from_star.logpdf(beta_j)
        if sampler.z_fixed is None:
            log_q_star += sampler.zprop.logpdf(star.z)
            log_q_j += sampler.zprop.logpdf(z_j)
        log_alpha = min(0.0, star_joint - log_joint_all[j] + log_q_j - log_q_star)
        log_num_terms[j] = log_alpha + log_q_star
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    log_den_terms = np.empty(B)
    for k in range(B):
        z_k = star.z if sampler.z_fixed is not None else sampler.zprop.sample(rng)
        try:
            prop = sampler.one_step(z_k, star.beta)
            beta_k = prop.sample(rng)
            ll_k = sampler.loglik(beta_k)
            lp_k = sampler.log_prior(beta_k, z_k)
            back = sampler.one_step(star.z, beta_k)
            log_q_k = prop.logpdf(beta_k)
            log_q_back = back.logpdf(star.beta)
            if sampler.z_fixed is None:
                log_q_k += sampler.zprop.logpdf(z_k)
                log_q_back += sampler.zprop.logpdf(star.z)
            log_den_terms[k] = min(
                0.0, (ll_k + lp_k) - star_joint + log_q_back - log_q_k
            )
        except (SingularMatrixError, EvaluationError):
            log_den_terms[k] = -math.inf
    def estimate(num_terms, den_terms):
        log_num = _log_mean_exp(num_terms)
        log_den = _log_mean_exp(den_terms)
        if log_den == -math.inf:
            raise EvaluationError("all fresh proposals from theta* were rejected")
        return star_joint - (log_num - log_den)

    total_estimate = estimate(log_num_terms, log_den_terms)
    batches = []
    splits_n = np.array_split(log_num_terms, n_batches)
    splits_d = np.array_split(log_den_terms, n_batches)
    for bn, bd in zip(splits_n, splits_d):
        try:
            batches.append(estimate(bn, bd))
        except EvaluationError:
            continue
    if len(batches) >= 2:
        se = float(np.std(batches, ddof=1) / math.sqrt(len(batches)))
    else:
        se = math.nan
    return float(total_estimate), se


def _log_mean_exp(values: np.ndarray) -> float:
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return -math.inf
    mx = finite.max()
    return float(mx + math.log(np.sum(np.exp(finite - mx)) / values.size))


def mh_step(state: tuple[np.ndarray, float], ds: Dataset, design, hp: HyperPrior,
            rng: np.random.Generator, sampler: ModelSampler | None = None,
            ) -> tuple[tuple[np.ndarray, float], bool]:
    """Single Metropolis-Hastings transition from ``state = (beta, z)``.

    Convenience wrapper over :class:`ModelSampler`; pass ``sampler`` to avoid
    rebuilding the per-model caches when stepping repeatedly.
    """
    if sampler is None:
        sampler = ModelSampler(ds, design, hp)
    beta, z = state
    beta = np.asarray(beta, dtype=float)
    current = _State(beta, float(z), sampler.loglik(beta),
                     sampler.log_prior(beta, float(z)))
    new, accepted, _ = sampler.step(current, rng)
    return (new.beta, new.z), accepted
