"""Command-line front end.

Subcommands: ``enumerate`` (exhaustive sweep), ``search`` (stochastic model
composition), ``sample`` (parameter draws plus the MCMC evidence estimate
for one model), and ``report`` (summaries recomputed from a saved sweep).
Every run writes a ``manifest.json`` echoing the configuration, and outputs
are deterministic given the seed.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 completed with numerical failures on some models.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .dataio import (
    ingest_csv,
    read_models_csv,
    write_curve_csv,
    write_fit_csv,
    write_gposterior_csv,
    write_inclusion_csv,
    write_manifest,
    write_models_csv,
)
from .exceptions import ConstructionError, DataError, GlmBmaError, UnsupportedOperationError
from .modelspace import ModelKind, build_design, parse_model_key, shift_to_positive
from .sampler import ChainConfig, chib_jeliazkov, run_chain
from .search import (
    exhaustive_posterior,
    fp_effect_curve,
    g_posterior_summary,
    inclusion_probabilities,
    map_and_median_models,
    mc3_search,
    model_average_fit,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glmbma",
        description="Bayesian model selection and averaging for GLMs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("enumerate", "evaluate every model in the space exhaustively"),
        ("search", "stochastic model-composition search (fp spaces)"),
        ("sample", "posterior parameter draws and MCMC evidence for one model"),
        ("report", "recompute summaries from a saved sweep"),
    ]:
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="YAML configuration file")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--threads", type=int, default=None, help="worker cap for sweeps")
        cmd.add_argument("--out", default=None, help="output directory")
        if name == "sample":
            cmd.add_argument("--model", required=True,
                             help="model index, e.g. 1011001 or x1:(-2);x2:()")
        if name == "report":
            cmd.add_argument("--from", dest="source", required=True,
                             help="directory holding a saved models.csv")
    return parser


def _load(args) -> tuple[RunConfig, "Dataset"]:
    config = load_config(args.config, overrides={
        "seed": args.seed, "threads": args.threads, "out": args.out,
    })
    ds = ingest_csv(config.data, config)
    if config.space == "fp" and config.shift_to_positive:
        ds, _ = shift_to_positive(ds)
    return config, ds


def _chain_config(config: RunConfig) -> ChainConfig:
    return ChainConfig(burn_in=config.burn_in, n_samples=config.n_samples,
                       thin=config.thin, seed=config.seed)


def _write_posterior_outputs(out: Path, config: RunConfig, ds, mp) -> dict:
    write_models_csv(out / "models.csv", mp)
    incl = inclusion_probabilities(mp)
    write_inclusion_csv(out / "inclusion.csv", ds.covariate_names, incl)
    map_model, median_model = map_and_median_models(mp)
    summary = {
        "models_evaluated": mp.visited_count,
        "failures": [list(f) for f in mp.failures],
        "map_model": map_model.key(),
        "median_probability_model": median_model.key(),
        "inclusion": {name: float(p) for name, p in zip(ds.covariate_names, incl)},
    }
    if config.fit_top_k > 0:
        fitted, weights = model_average_fit(ds, mp, config.fit_top_k, _chain_config(config),
                                            order=config.order, n_nodes=config.nodes)
        write_fit_csv(out / "fit.csv", fitted)
        summary["fit_weights"] = {k: float(v) for k, v in weights.items()}
    if config.g_top_k > 0 and mp.criterion == "bayes":
        gsum = g_posterior_summary(ds, mp, config.g_top_k, _chain_config(config),
                                   order=config.order, n_nodes=config.nodes)
        write_gposterior_csv(out / "gposterior.csv", gsum)
        summary["g_posterior"] = {
            "mean_g": gsum.mean_g,
            "prob_g_below_n": gsum.prob_g_below_n,
            "models_pooled": len(gsum.weights),
        }
    for name in config.curve_covariates:
        if name not in ds.covariate_names:
            raise ConstructionError(f"curve covariate {name!r} is not a dataset covariate")
        k = ds.covariate_names.index(name)
        xs = ds.X_raw[:, k]
        grid = np.linspace(xs.min(), xs.max(), config.curve_points)
        curve = fp_effect_curve(ds, mp, k, grid, _chain_config(config),
                                order=config.order, n_nodes=config.nodes)
        write_curve_csv(out / f"curve_{name}.csv", curve)
    return summary


def run_job(args) -> int:
    started = time.time()
    config, ds = _load(args)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    criterion = config.resolve_criterion(ds.n)
    failures = 0

    if args.command == "enumerate":
        mp = exhaustive_posterior(ds, config.kind, criterion, order=config.order,
                                  n_nodes=config.nodes, threads=config.threads,
                                  bracket_cap=config.bracket_cap)
        summary = _write_posterior_outputs(out, config, ds, mp)
        failures = len(mp.failures)
    elif args.command == "search":
        if config.kind is not ModelKind.FRACTIONAL_POLYNOMIAL:
            raise ConstructionError("the stochastic search operates on fp spaces; "
                                    "use 'enumerate' for variable selection")
        mp = mc3_search(ds, criterion, config.iterations, config.seed,
                        order=config.order, n_nodes=config.nodes,
                        bracket_cap=config.bracket_cap)
        summary = _write_posterior_outputs(out, config, ds, mp)
        failures = len(mp.failures)
    elif args.command == "sample":
        gamma = parse_model_key(args.model, ds.m)
        if gamma.p == 0:
            raise ConstructionError(
                "the intercept-only model has no covariance factor to sample; "
                "its evidence is available in closed form via the sweep outputs"
            )
        if isinstance(criterion, str):
            raise ConstructionError("sampling needs criterion 'bayes' or 'eb'")
        design = build_design(ds, gamma)
        cfg = _chain_config(config)
        draws = run_chain(ds, design, criterion, cfg, order=config.order,
                          n_nodes=config.nodes)
        draws.to_csv(out / "draws.csv")
        log_ml, se = chib_jeliazkov(ds, design, criterion, draws, cfg,
                                    order=config.order, n_nodes=config.nodes)
        summary = {
            "model": gamma.key(),
            "acceptance_rate": draws.acceptance_rate,
            "numerical_rejects": draws.n_numerical_rejects,
            "mcmc_log_evidence": log_ml,
            "mcmc_standard_error": se,
        }
    else:  # report
        source = Path(args.source)
        mp = read_models_csv(source / "models.csv", len(config.covariates))
        write_models_csv(out / "models.csv", mp)
        incl = inclusion_probabilities(mp)
        write_inclusion_csv(out / "inclusion.csv", config.covariates, incl)
        map_model, median_model = map_and_median_models(mp)
        summary = {
            "source": str(source),
            "models_evaluated": mp.visited_count,
            "map_model": map_model.key(),
            "median_probability_model": median_model.key(),
        }

    write_manifest(out / "manifest.json", config, args.command,
                   time.time() - started, summary)
    return EXIT_NUMERICAL if failures else EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return run_job(args)
    except (ConstructionError, UnsupportedOperationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GlmBmaError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
