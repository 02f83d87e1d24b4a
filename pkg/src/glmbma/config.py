"""Run configuration: YAML file with flat keys plus small sections.

All keys are documented in docs/config.md.  The hyperprior section resolves
against the dataset's sample size (F1 and F2 scale with n), so the prior
object is built only after the data are loaded.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

import yaml

from .exceptions import ConstructionError
from .families import Family, FamilyLink, Link
from .hyperpriors import HyperPrior, from_config as hyperprior_from_config
from .modelspace import ModelKind

_CRITERIA = ("bayes", "eb", "aic", "bic")


@dataclass
class RunConfig:
    data: str
    response: str
    covariates: list[str]
    family: str
    link: str
    weights: str | None = None
    dispersion: float = 1.0
    space: str = "vs"
    criterion: str = "bayes"
    hyperprior: dict = field(default_factory=lambda: {"kind": "F1"})
    eb: bool = False
    shift_to_positive: bool = False
    order: int | None = None
    nodes: int = 20
    bracket_cap: float = 30.0
    iterations: int = 100_000
    seed: int = 0
    threads: int = 1
    burn_in: int = 1000
    n_samples: int = 4500
    thin: int = 2
    fit_top_k: int = 0
    curve_covariates: list[str] = field(default_factory=list)
    curve_points: int = 100
    g_top_k: int = 0
    out: str = "out"

    def __post_init__(self):
        if not self.covariates:
            raise ConstructionError("at least one covariate column is required")
        if self.space not in ("vs", "fp"):
            raise ConstructionError(f"space must be 'vs' or 'fp', got {self.space!r}")
        if self.eb:
            self.criterion = "eb"
        if self.criterion not in _CRITERIA:
            raise ConstructionError(f"criterion must be one of {_CRITERIA}, got {self.criterion!r}")
        if self.order not in (None, 2, 6):
            raise ConstructionError(f"order must be 2 or 6, got {self.order!r}")
        if not 1 <= self.nodes <= 64:
            raise ConstructionError(f"nodes must be in 1..64, got {self.nodes}")
        if self.iterations <= 0:
            raise ConstructionError(f"iterations must be positive, got {self.iterations}")
        if self.threads < 1:
            raise ConstructionError(f"threads must be >= 1, got {self.threads}")
        if self.dispersion <= 0:
            raise ConstructionError(f"dispersion must be positive, got {self.dispersion}")
        # constructibility check fails fast on bad family/link pairs
        self.family_link()

    def family_link(self) -> FamilyLink:
        try:
            return FamilyLink(Family(self.family), Link(self.link))
        except ValueError as exc:
            raise ConstructionError(f"unknown family/link: {self.family!r}/{self.link!r}") from exc

    @property
    def kind(self) -> ModelKind:
        return ModelKind.VARIABLE_SELECTION if self.space == "vs" else ModelKind.FRACTIONAL_POLYNOMIAL

    def resolve_criterion(self, n: int) -> HyperPrior | str:
        if self.criterion == "eb":
            return HyperPrior.empirical_bayes()
        if self.criterion == "bayes":
            return hyperprior_from_config(self.hyperprior, n)
        return self.criterion

    def echo(self) -> dict:
        return asdict(self)


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConstructionError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConstructionError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConstructionError(f"config {path} must be a mapping of keys to values")
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    known = {f for f in RunConfig.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ConstructionError(f"unknown config keys: {sorted(unknown)}")
    missing = [k for k in ("data", "response", "covariates", "family", "link") if k not in raw]
    if missing:
        raise ConstructionError(f"missing required config keys: {missing}")
    try:
        return RunConfig(**raw)
    except TypeError as exc:
        raise ConstructionError(f"bad config value types: {exc}") from exc
