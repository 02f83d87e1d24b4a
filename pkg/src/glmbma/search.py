"""Posterior over model space: exhaustive sweeps, stochastic search, and
model-averaged summaries.

Evidence enters through one of four surrogates: the integrated approximation
under a proper prior on g, the maximized conditional evidence (empirical
Bayes), or information-criterion weights exp(-AIC/2), exp(-BIC/2).  Model
priors carry the multiplicity adjustment, and stochastic-search posteriors
are renormalized over the set of visited models.

Per-model failures never abort a sweep; they are recorded and surfaced in
the result.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ConstructionError, GlmBmaError, UnsupportedOperationError
from .evidence import DEFAULT_NODES, ModelWorkspace, default_order, info_criteria, null_model_marglik
from .families import Dataset
from .hyperpriors import HyperPrior
from .iwls import iwls_ml
from .modelspace import (
    ALL_FP_TUPLES,
    DEFAULT_ENUMERATION_CAP,
    ModelIndex,
    ModelKind,
    build_design,
    enumerate_models,
    fp_transform,
    model_log_prior,
    propose_neighbor,
)
from .numutil import weighted_quantile
from .sampler import ChainConfig, run_chain

Criterion = HyperPrior | str  # a prior (fully Bayes / EB) or "aic" / "bic"


def derive_seed(seed: int, key: str) -> int:
    """Stable per-model seed so concurrent evaluation order cannot matter."""
    digest = hashlib.blake2b(f"{seed}:{key}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def _criterion_label(criterion: Criterion) -> str:
    if isinstance(criterion, HyperPrior):
        return "eb" if criterion.is_eb else "bayes"
    label = str(criterion).lower()
    if label not in ("aic", "bic"):
        raise ConstructionError(f"criterion must be a prior, 'aic' or 'bic'; got {criterion!r}")
    return label


@dataclass(frozen=True)
class ModelRecord:
    gamma: ModelIndex
    log_marglik: float
    log_prior: float
    flag: str


@dataclass(frozen=True)
class ModelPosterior:
    """Normalized posterior over the evaluated models."""

    kind: ModelKind
    m: int
    entries: dict[str, ModelRecord]
    method: str
    criterion: str
    hyperprior: HyperPrior | None
    visited_count: int
    failures: tuple[tuple[str, str], ...] = ()

    @property
    def log_normalizer(self) -> float:
        scores = np.array([r.log_marglik + r.log_prior for r in self.entries.values()])
        mx = scores.max()
        return float(mx + math.log(np.sum(np.exp(scores - mx))))

    def posterior_probs(self) -> dict[str, float]:
        log_norm = self.log_normalizer
        return {
            key: math.exp(r.log_marglik + r.log_prior - log_norm)
            for key, r in self.entries.items()
        }

    def top_models(self, k: int | None = None) -> list[tuple[str, float]]:
        probs = self.posterior_probs()
        ranked = sorted(probs.items(), key=lambda kv: (-kv[1], kv[0]))
        return ranked if k is None else ranked[:k]


def _evaluate_one(ds: Dataset, gamma: ModelIndex, criterion: Criterion,
                  order: int | None, n_nodes: int,
                  bracket_cap: float = 30.0) -> ModelRecord:
    log_prior = model_log_prior(gamma, ds.m)
    design = build_design(ds, gamma)
    if isinstance(criterion, str):
        aic, bic, lw_aic, lw_bic = info_criteria(ds, design)
        if criterion.lower() == "aic":
            # Buckland-style weights: exp(-AIC/2) alone, no model prior
            return ModelRecord(gamma, lw_aic, 0.0, "aic")
        # BIC replaces the evidence inside the posterior formula, so the
        # multiplicity-adjusted prior still applies
        return ModelRecord(gamma, lw_bic, log_prior, "bic")
    if gamma.p == 0:
        return ModelRecord(gamma, null_model_marglik(ds), log_prior, "null")
    resolved = default_order(ds) if order is None else order
    ws = ModelWorkspace(ds, design)
    if criterion.is_eb:
        _, value = ws.eb_optimize(resolved, bracket_cap)
        return ModelRecord(gamma, value, log_prior, "eb")
    result = ws.log_marglik(criterion, resolved, n_nodes, bracket_cap)
    flag = f"laplace{resolved}" + ("_fallback" if result.laplace_fallback else "")
    return ModelRecord(gamma, result.log_evidence, log_prior, flag)


def exhaustive_posterior(ds: Dataset, kind: ModelKind, criterion: Criterion,
                         order: int | None = None, n_nodes: int = DEFAULT_NODES,
                         threads: int = 1, cap: int = DEFAULT_ENUMERATION_CAP,
                         bracket_cap: float = 30.0) -> ModelPosterior:
    """Evaluate every model in an enumerable space and normalize."""
    kind = ModelKind(kind)
    models = list(enumerate_models(kind, ds.m, cap))
    entries: dict[str, ModelRecord] = {}
    failures: list[tuple[str, str]] = []

    def work(gamma: ModelIndex):
        try:
            return gamma.key(), _evaluate_one(ds, gamma, criterion, order, n_nodes,
                                              bracket_cap), None
        except GlmBmaError as exc:
            return gamma.key(), None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, models, chunksize=16))
    else:
        results = [work(g) for g in models]
    for key, record, error in results:
        if record is None:
            failures.append((key, error))
        else:
            entries[key] = record
    if not entries:
        raise ConstructionError("every model failed to evaluate; nothing to normalize")
    return ModelPosterior(
        kind=kind, m=ds.m, entries=entries, method="exhaustive",
        criterion=_criterion_label(criterion),
        hyperprior=criterion if isinstance(criterion, HyperPrior) else None,
        visited_count=len(entries), failures=tuple(failures),
    )


def mc3_search(ds: Dataset, criterion: Criterion, iterations: int, seed: int,
               order: int | None = None, n_nodes: int = DEFAULT_NODES,
               bracket_cap: float = 30.0) -> ModelPosterior:
    """Stochastic model composition search over the fractional-polynomial space.

    Starts at the null model, proposes single-edit neighbors, and accepts
    with the evidence-times-prior ratio corrected by the exact proposal
    ratio.  Evidence is cached per visited model; the returned posterior is
    renormalized over everything successfully evaluated.
    """
    if iterations < 1:
        raise ConstructionError(f"iterations must be positive, got {iterations}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    cache: dict[str, ModelRecord | None] = {}
    failures: dict[str, str] = {}

    def evaluate(gamma: ModelIndex) -> ModelRecord | None:
        key = gamma.key()
        if key in cache:
            return cache[key]
        try:
            record = _evaluate_one(ds, gamma, criterion, order, n_nodes, bracket_cap)
        except GlmBmaError as exc:
            failures[key] = f"{type(exc).__name__}: {exc}"
            record = None
        cache[key] = record
        return record

    current = ModelIndex.null_model(ModelKind.FRACTIONAL_POLYNOMIAL, ds.m)
    current_record = evaluate(current)
    if current_record is None:
        raise ConstructionError("the null model failed to evaluate; cannot start the search")
    for _ in range(iterations):
        proposal, log_ratio = propose_neighbor(current, rng)
        record = evaluate(proposal)
        if record is None:
            continue  # failed proposals are auto-rejected
        log_alpha = (
            record.log_marglik + record.log_prior
            - current_record.log_marglik - current_record.log_prior
            + log_ratio
        )
        if math.log(rng.random()) < min(0.0, log_alpha):
            current, current_record = proposal, record
    entries = {key: rec for key, rec in cache.items() if rec is not None}
    return ModelPosterior(
        kind=ModelKind.FRACTIONAL_POLYNOMIAL, m=ds.m, entries=entries, method="mc3",
        criterion=_criterion_label(criterion),
        hyperprior=criterion if isinstance(criterion, HyperPrior) else None,
        visited_count=len(entries), failures=tuple(failures.items()),
    )


# ---------------------------------------------------------------------------
# Posterior summaries
# ---------------------------------------------------------------------------

def inclusion_probabilities(mp: ModelPosterior) -> np.ndarray:
    """Posterior probability that each covariate enters the model."""
    if not mp.entries:
        raise ConstructionError("empty posterior")
    probs = mp.posterior_probs()
    out = np.zeros(mp.m)
    for key, record in mp.entries.items():
        pr = probs[key]
        for k in range(mp.m):
            if record.gamma.includes(k):
                out[k] += pr
    return out


def map_and_median_models(mp: ModelPosterior) -> tuple[ModelIndex, ModelIndex]:
    """Highest-posterior model and the median-probability model.

    The median model keeps exactly the covariates with inclusion probability
    strictly above one half; for power transforms, an included covariate
    gets its highest-posterior-mass nonempty tuple.
    """
    map_key = mp.top_models(1)[0][0]
    map_model = mp.entries[map_key].gamma
    incl = inclusion_probabilities(mp)
    if mp.kind is ModelKind.VARIABLE_SELECTION:
        median = ModelIndex.from_bits(tuple(int(p > 0.5) for p in incl))
        return map_model, median
    probs = mp.posterior_probs()
    powers = []
    for k in range(mp.m):
        if incl[k] <= 0.5:
            powers.append(())
            continue
        mass: dict[tuple, float] = {}
        for key, record in mp.entries.items():
            t = record.gamma.fp_powers[k]
            if t:
                mass[t] = mass.get(t, 0.0) + probs[key]
        best = sorted(mass.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
        powers.append(best)
    return map_model, ModelIndex.from_powers(powers)


def _chain_config(cfg: ChainConfig, seed_key: str) -> ChainConfig:
    return replace(cfg, seed=derive_seed(cfg.seed, seed_key))


def _null_fitted_draws(ds: Dataset, cfg: ChainConfig, key: str) -> np.ndarray:
    """Fitted means for the intercept-only model from a 1-D normal posterior
    approximation (exact in the gaussian case)."""
    fit = iwls_ml(ds, np.empty((ds.n, 0)))
    sd = math.exp(-0.5 * fit.log_det_precision)
    rng = np.random.default_rng(np.random.SeedSequence(derive_seed(cfg.seed, key)))
    b0 = fit.mean[0] + sd * rng.standard_normal(cfg.n_samples)
    return np.full(ds.n, float(np.mean(ds.family_link.mean(b0))))


def model_average_fit(ds: Dataset, mp: ModelPosterior, top_k: int,
                      cfg: ChainConfig, order: int | None = None,
                      n_nodes: int = DEFAULT_NODES) -> tuple[np.ndarray, dict[str, float]]:
    """Posterior-mean fitted values averaged over the top models.

    Bayes/EB models are sampled; information-criterion sweeps use the
    maximum-likelihood plug-in fit per model.  Weights are the renormalized
    posterior probabilities of the models actually used.
    """
    if top_k < 1:
        raise ConstructionError(f"top_k must be >= 1, got {top_k}")
    chosen = mp.top_models(top_k)
    fits: dict[str, np.ndarray] = {}
    weights: dict[str, float] = {}
    for key, prob in chosen:
        gamma = mp.entries[key].gamma
        design = build_design(ds, gamma)
        try:
            if mp.criterion in ("aic", "bic"):
                fit = iwls_ml(ds, design)
                eta = fit.mean[0] + (design.X_centered @ fit.mean[1:] if gamma.p else 0.0)
                fitted = np.asarray(ds.family_link.mean(np.broadcast_to(eta, (ds.n,))))
            elif gamma.p == 0:
                fitted = _null_fitted_draws(ds, cfg, key)
            else:
                draws = run_chain(ds, design, mp.hyperprior, _chain_config(cfg, key),
                                  order=order, n_nodes=n_nodes)
                eta = draws.betas[:, 0][:, None] + draws.betas[:, 1:] @ design.X_centered.T
                fitted = np.asarray(ds.family_link.mean(eta)).mean(axis=0)
        except GlmBmaError:
            continue  # model skipped, weights renormalized below
        fits[key] = fitted
        weights[key] = prob
    if not fits:
        raise ConstructionError("no model in the requested set could be fitted")
    total = sum(weights.values())
    weights = {k: v / total for k, v in weights.items()}
    averaged = np.zeros(ds.n)
    for key, fitted in fits.items():
        averaged += weights[key] * fitted
    return averaged, weights


@dataclass(frozen=True)
class EffectCurve:
    x: np.ndarray
    mean: np.ndarray
    lower_pointwise: np.ndarray
    upper_pointwise: np.ndarray
    lower_simultaneous: np.ndarray
    upper_simultaneous: np.ndarray
    weights: dict[str, float]


def fp_effect_curve(ds: Dataset, mp: ModelPosterior, covariate: int,
                    grid: np.ndarray, cfg: ChainConfig, order: int | None = None,
                    n_nodes: int = DEFAULT_NODES, level: float = 0.95) -> EffectCurve:
    """Model-averaged transform of one covariate, holding the others at the
    highest-posterior configuration.

    Averages over the 44 nonempty tuples for the chosen covariate, weighted
    by their posterior; curves are centered over the observed covariate
    values, and simultaneous bands scale the pointwise spread by the high
    quantile of the maximum standardized deviation across the grid.
    """
    if mp.kind is not ModelKind.FRACTIONAL_POLYNOMIAL:
        raise UnsupportedOperationError("effect curves are defined for power-transform spaces")
    if mp.criterion in ("aic", "bic"):
        raise UnsupportedOperationError("effect curves need a sampled coefficient posterior")
    map_model, _ = map_and_median_models(mp)
    if not map_model.includes(covariate):
        raise ConstructionError(
            f"covariate x{covariate + 1} is not in the highest-posterior model; "
            "see the inclusion-probability output"
        )
    grid = np.asarray(grid, dtype=float)
    variants: list[ModelIndex] = []
    for t in ALL_FP_TUPLES[1:]:
        powers = list(map_model.fp_powers)
        powers[covariate] = t
        variants.append(ModelIndex.from_powers(powers))
    # evidence-based weights over the variants, reusing any cached records
    log_scores = {}
    for gamma in variants:
        key = gamma.key()
        if key in mp.entries:
            rec = mp.entries[key]
        else:
            try:
                rec = _evaluate_one(ds, gamma, mp.hyperprior, order, n_nodes)
            except GlmBmaError:
                continue
        log_scores[key] = (rec.log_marglik + rec.log_prior, rec.gamma)
    if not log_scores:
        raise ConstructionError("no transform variant could be evaluated")
    mx = max(v for v, _ in log_scores.values())
    weights = {k: math.exp(v - mx) for k, (v, _) in log_scores.items()}
    total = sum(weights.values())
    weights = {k: v / total for k, v in weights.items()}

    curves = []   # per-draw curves over the grid
    wts = []      # per-draw weights
    name = ds.covariate_names[covariate]
    for key, (_, gamma) in log_scores.items():
        design = build_design(ds, gamma)
        try:
            draws = run_chain(ds, design, mp.hyperprior, _chain_config(cfg, key),
                              order=order, n_nodes=n_nodes)
        except GlmBmaError:
            continue
        cols = [j for j, owner in enumerate(design.column_covariates) if owner == covariate]
        t = gamma.fp_powers[covariate]
        grid_cols = np.column_stack(fp_transform(grid, t, name=name))
        data_cols = design.X_centered[:, cols] + design.column_means[cols]
        alpha = draws.betas[:, 1:][:, cols]
        curve = alpha @ grid_cols.T                     # draws x grid
        at_data = alpha @ data_cols.T                   # draws x n
        curve -= at_data.mean(axis=1, keepdims=True)    # center over data locations
        n_draws = curve.shape[0]
        curves.append(curve)
        wts.append(np.full(n_draws, weights[key] / n_draws))
    if not curves:
        raise ConstructionError("no transform variant could be sampled")
    allc = np.vstack(curves)
    allw = np.concatenate(wts)
    allw /= allw.sum()
    mean = allw @ allc
    sd = np.sqrt(np.maximum(allw @ (allc - mean) ** 2, 1e-300))
    lo = np.empty_like(mean)
    hi = np.empty_like(mean)
    tail = 0.5 * (1.0 - level)
    for j in range(grid.size):
        lo[j], hi[j] = weighted_quantile(allc[:, j], allw, [tail, 1.0 - tail])
    max_dev = (np.abs(allc - mean) / sd).max(axis=1)
    scale = float(weighted_quantile(max_dev, allw, [level])[0])
    return EffectCurve(
        x=grid, mean=mean, lower_pointwise=lo, upper_pointwise=hi,
        lower_simultaneous=mean - scale * sd, upper_simultaneous=mean + scale * sd,
        weights=weights,
    )


@dataclass(frozen=True)
class GPosteriorSummary:
    mean_g: float
    prob_g_below_n: float
    z_values: np.ndarray
    z_weights: np.ndarray
    weights: dict[str, float]


def g_posterior_summary(ds: Dataset, mp: ModelPosterior, top_k: int = 1000,
                        cfg: ChainConfig | None = None, order: int | None = None,
                        n_nodes: int = DEFAULT_NODES) -> GPosteriorSummary:
    """Model-averaged posterior of z = log(g) over the best visited models.

    Intercept-only models carry no g and are skipped with the weights
    renormalized over the remainder.
    """
    if mp.criterion != "bayes":
        raise UnsupportedOperationError("the g posterior exists only under a proper prior on g")
    cfg = cfg or ChainConfig(burn_in=500, n_samples=1000, thin=1, seed=0)
    chosen = [(k, p) for k, p in mp.top_models(top_k) if mp.entries[k].gamma.p >= 1]
    if not chosen:
        raise ConstructionError("no model with covariates among the top models")
    z_chunks, w_chunks, used = [], [], {}
    for key, prob in chosen:
        gamma = mp.entries[key].gamma
        try:
            draws = run_chain(ds, build_design(ds, gamma), mp.hyperprior,
                              _chain_config(cfg, key), order=order, n_nodes=n_nodes)
        except GlmBmaError:
            continue
        z_chunks.append(draws.zs)
        w_chunks.append(np.full(draws.zs.size, prob / draws.zs.size))
        used[key] = prob
    if not z_chunks:
        raise ConstructionError("no top model could be sampled")
    z = np.concatenate(z_chunks)
    w = np.concatenate(w_chunks)
    w /= w.sum()
    return GPosteriorSummary(
        mean_g=float(w @ np.exp(z)),
        prob_g_below_n=float(w @ (z < math.log(ds.n))),
        z_values=z,
        z_weights=w,
        weights=used,
    )
