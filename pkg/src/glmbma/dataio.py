"""CSV ingestion and deterministic report files.

All numeric output is written with 17 significant digits so that repeated
runs with the same seed produce byte-identical files on any platform.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .config import RunConfig
from .exceptions import DataError
from .families import Dataset
from .modelspace import ModelIndex, parse_model_key
from .search import EffectCurve, GPosteriorSummary, ModelPosterior, ModelRecord


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def ingest_csv(path: str | Path, config: RunConfig) -> Dataset:
    """Load a header-ed CSV and assemble the analysis dataset.

    Errors name the offending column, and for unparsable cells the 1-based
    data row as well.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if frame.empty:
        raise DataError(f"{path} contains no data rows")
    needed = [config.response] + list(config.covariates)
    if config.weights:
        needed.append(config.weights)
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise DataError(f"missing columns in {path}: {missing}")

    def numeric(col: str) -> np.ndarray:
        converted = pd.to_numeric(frame[col].str.strip(), errors="coerce")
        bad = converted.index[converted.isna()]
        if len(bad):
            row = int(bad[0]) + 1
            raise DataError(
                f"non-numeric value {frame[col].iloc[bad[0]]!r} at row {row}, column {col!r}"
            )
        return converted.to_numpy(dtype=float)

    y = numeric(config.response)
    X = np.column_stack([numeric(c) for c in config.covariates])
    w = numeric(config.weights) if config.weights else None
    return Dataset(
        y=y, X_raw=X, family_link=config.family_link(), w=w,
        phi=config.dispersion, covariate_names=tuple(config.covariates),
    )


# ---------------------------------------------------------------------------
# Report writers
# ---------------------------------------------------------------------------

def write_models_csv(path: Path, mp: ModelPosterior) -> None:
    probs = mp.posterior_probs()
    ranked = sorted(mp.entries.items(), key=lambda kv: (-probs[kv[0]], kv[0]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["model", "log_marglik", "log_prior", "post_prob", "flag"])
        for key, record in ranked:
            out.writerow([key, _fmt(record.log_marglik), _fmt(record.log_prior),
                          _fmt(probs[key]), record.flag])


def read_models_csv(path: Path, m: int) -> ModelPosterior:
    """Rebuild a (renormalizable) posterior from a saved sweep."""
    entries: dict[str, ModelRecord] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"model", "log_marglik", "log_prior", "flag"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise DataError(f"{path} is not a saved model sweep")
        rows = list(reader)
    if not rows:
        raise DataError(f"{path} contains no models")
    kind = None
    for row in rows:
        gamma = parse_model_key(row["model"], m)
        kind = gamma.kind
        entries[row["model"]] = ModelRecord(
            gamma, float(row["log_marglik"]), float(row["log_prior"]), row["flag"]
        )
    return ModelPosterior(
        kind=kind, m=m, entries=entries, method="report", criterion="bayes",
        hyperprior=None, visited_count=len(entries),
    )


def write_inclusion_csv(path: Path, names, probabilities) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["covariate", "probability"])
        for name, p in zip(names, probabilities):
            out.writerow([name, _fmt(p)])


def write_fit_csv(path: Path, fitted: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["row", "fitted"])
        for i, value in enumerate(fitted, start=1):
            out.writerow([i, _fmt(value)])


def write_curve_csv(path: Path, curve: EffectCurve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["x", "mean", "lower_pointwise", "upper_pointwise",
                      "lower_simultaneous", "upper_simultaneous"])
        for j in range(curve.x.size):
            out.writerow([_fmt(curve.x[j]), _fmt(curve.mean[j]),
                          _fmt(curve.lower_pointwise[j]), _fmt(curve.upper_pointwise[j]),
                          _fmt(curve.lower_simultaneous[j]), _fmt(curve.upper_simultaneous[j])])


def write_gposterior_csv(path: Path, summary: GPosteriorSummary) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["z", "weight"])
        for z, weight in zip(summary.z_values, summary.z_weights):
            out.writerow([_fmt(z), _fmt(weight)])


def write_manifest(path: Path, config: RunConfig, command: str, wall_time: float,
                   summary: dict) -> None:
    import scipy

    from . import __version__
    from . import kernels

    record = {
        "command": command,
        "config": config.echo(),
        "versions": {
            "glmbma": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "kernel_backend": kernels.BACKEND,
        },
        "wall_time_seconds": round(wall_time, 3),
        "summary": summary,
    }
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
