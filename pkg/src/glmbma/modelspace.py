"""Model indices, design-matrix construction, model priors, and search moves.

Two kinds of model space: variable selection (an inclusion bit per
covariate) and fractional polynomials, where each covariate carries zero,
one or two powers from {-2, -1, -1/2, 0, 1/2, 1, 2, 3}.  Power 0 denotes
the logarithm, and a repeated power p contributes (x^p, x^p log x).

Design matrices are assembled in covariate order and every column is
centered, so the intercept parametrizes the average linear predictor and
slope priors never shrink the mean level.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from math import comb

import numpy as np

from .exceptions import ConstructionError, DataError, UnsupportedOperationError
from .families import Dataset

FP_POWERS: tuple[float, ...] = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0)
FP_TUPLES_PER_COVARIATE = 45  # 1 empty + 8 single + 36 unordered pairs
DEFAULT_ENUMERATION_CAP = 1_000_000


class ModelKind(str, enum.Enum):
    VARIABLE_SELECTION = "vs"
    FRACTIONAL_POLYNOMIAL = "fp"


def _canonical_tuple(powers) -> tuple[float, ...]:
    t = tuple(sorted(float(p) for p in powers))
    if len(t) > 2:
        raise ConstructionError(f"at most two powers per covariate, got {t}")
    for p in t:
        if p not in FP_POWERS:
            raise ConstructionError(f"power {p} is not in the allowed set {FP_POWERS}")
    return t


@dataclass(frozen=True)
class ModelIndex:
    """Identifies one model: inclusion bits or per-covariate power tuples."""

    kind: ModelKind
    vs_bits: tuple[int, ...] | None = None
    fp_powers: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        kind = ModelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ModelKind.VARIABLE_SELECTION:
            if self.vs_bits is None or self.fp_powers is not None:
                raise ConstructionError("variable-selection index needs vs_bits only")
            bits = tuple(int(b) for b in self.vs_bits)
            if any(b not in (0, 1) for b in bits) or not bits:
                raise ConstructionError(f"vs_bits must be nonempty 0/1 flags, got {self.vs_bits}")
            object.__setattr__(self, "vs_bits", bits)
        else:
            if self.fp_powers is None or self.vs_bits is not None:
                raise ConstructionError("fractional-polynomial index needs fp_powers only")
            powers = tuple(_canonical_tuple(t) for t in self.fp_powers)
            if not powers:
                raise ConstructionError("fp_powers must cover at least one covariate")
            object.__setattr__(self, "fp_powers", powers)

    @staticmethod
    def from_bits(bits) -> "ModelIndex":
        return ModelIndex(ModelKind.VARIABLE_SELECTION, vs_bits=tuple(bits))

    @staticmethod
    def from_powers(powers) -> "ModelIndex":
        return ModelIndex(ModelKind.FRACTIONAL_POLYNOMIAL, fp_powers=tuple(powers))

    @staticmethod
    def null_model(kind: ModelKind, m: int) -> "ModelIndex":
        if ModelKind(kind) is ModelKind.VARIABLE_SELECTION:
            return ModelIndex.from_bits((0,) * m)
        return ModelIndex.from_powers(((),) * m)

    @property
    def m(self) -> int:
        if self.kind is ModelKind.VARIABLE_SELECTION:
            return len(self.vs_bits)
        return len(self.fp_powers)

    @property
    def p(self) -> int:
        """Total number of design columns the index implies."""
        if self.kind is ModelKind.VARIABLE_SELECTION:
            return sum(self.vs_bits)
        return sum(len(t) for t in self.fp_powers)

    def includes(self, k: int) -> bool:
        if self.kind is ModelKind.VARIABLE_SELECTION:
            return bool(self.vs_bits[k])
        return len(self.fp_powers[k]) > 0

    def key(self) -> str:
        """Canonical text form, stable across runs; used in reports and logs."""
        if self.kind is ModelKind.VARIABLE_SELECTION:
            return "".join(str(b) for b in self.vs_bits)
        parts = []
        for k, t in enumerate(self.fp_powers):
            inner = ",".join(_format_power(p) for p in t)
            parts.append(f"x{k + 1}:({inner})")
        return ";".join(parts)

    def __str__(self) -> str:
        return self.key()


def _format_power(p: float) -> str:
    return str(int(p)) if p == int(p) else f"{p:g}"


def parse_model_key(text: str, m: int | None = None) -> ModelIndex:
    """Inverse of :meth:`ModelIndex.key` for both kinds."""
    text = text.strip()
    if set(text) <= {"0", "1"} and text:
        if m is not None and len(text) != m:
            raise ConstructionError(f"bitstring length {len(text)} does not match m={m}")
        return ModelIndex.from_bits(int(ch) for ch in text)
    powers = []
    for part in text.split(";"):
        name, _, inner = part.partition(":")
        if not name.startswith("x") or not inner.startswith("(") or not inner.endswith(")"):
            raise ConstructionError(f"cannot parse model index {text!r}")
        body = inner[1:-1].strip()
        powers.append(tuple(float(tok) for tok in body.split(",")) if body else ())
    if m is not None and len(powers) != m:
        raise ConstructionError(f"index covers {len(powers)} covariates, expected {m}")
    return ModelIndex.from_powers(powers)


# ---------------------------------------------------------------------------
# Design construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignMatrix:
    """Centered design for one model, with pre-centering column means."""

    X_centered: np.ndarray
    column_means: np.ndarray
    parent: ModelIndex
    column_covariates: tuple[int, ...]

    def __post_init__(self):
        X = np.ascontiguousarray(self.X_centered, dtype=float)
        X.flags.writeable = False
        means = np.asarray(self.column_means, dtype=float)
        means.flags.writeable = False
        object.__setattr__(self, "X_centered", X)
        object.__setattr__(self, "column_means", means)

    @property
    def n(self) -> int:
        return self.X_centered.shape[0]

    @property
    def p(self) -> int:
        return self.X_centered.shape[1]


def fp_transform(x: np.ndarray, powers, name: str = "x") -> list[np.ndarray]:
    """Power-transform one positive covariate column.

    Distinct powers give (x^p1, x^p2) with x^0 = log(x); a repeated power p
    gives (x^p, x^p log x).
    """
    t = _canonical_tuple(powers)
    x = np.asarray(x, dtype=float)
    if t and np.any(x <= 0):
        row = int(np.flatnonzero(x <= 0)[0])
        raise DataError(
            f"fractional polynomial transform undefined for covariate {name}: "
            f"nonpositive value {x[row]:g} at row {row}"
        )

    def one(p: float) -> np.ndarray:
        return np.log(x) if p == 0.0 else x ** p

    if len(t) <= 1:
        return [one(p) for p in t]
    p1, p2 = t
    if p1 == p2:
        return [one(p1), one(p1) * np.log(x)]
    return [one(p1), one(p2)]


def build_design(ds: Dataset, gamma: ModelIndex) -> DesignMatrix:
    """Assemble and center the design matrix implied by ``gamma``."""
    if gamma.m != ds.m:
        raise ConstructionError(f"model covers {gamma.m} covariates, dataset has {ds.m}")
    cols: list[np.ndarray] = []
    owners: list[int] = []
    if gamma.kind is ModelKind.VARIABLE_SELECTION:
        for k, bit in enumerate(gamma.vs_bits):
            if bit:
                cols.append(ds.X_raw[:, k].astype(float))
                owners.append(k)
    else:
        for k, t in enumerate(gamma.fp_powers):
            new = fp_transform(ds.X_raw[:, k], t, name=ds.covariate_names[k])
            cols.extend(new)
            owners.extend([k] * len(new))
    if not cols:
        X = np.empty((ds.n, 0))
        return DesignMatrix(X, np.empty(0), gamma, ())
    X = np.column_stack(cols)
    means = X.mean(axis=0)
    return DesignMatrix(X - means, means, gamma, tuple(owners))


def shift_to_positive(ds: Dataset, columns=None) -> tuple[Dataset, np.ndarray]:
    """Optional preprocessing: add (1 - min) to any requested column with
    nonpositive entries.  Returns the adjusted dataset and per-column shifts.
    """
    X = np.array(ds.X_raw)
    shifts = np.zeros(ds.m)
    which = range(ds.m) if columns is None else columns
    for k in which:
        lo = X[:, k].min()
        if lo <= 0:
            shifts[k] = 1.0 - lo
            X[:, k] += shifts[k]
    shifted = Dataset(
        y=ds.y, X_raw=X, family_link=ds.family_link, w=ds.w, phi=ds.phi,
        covariate_names=ds.covariate_names,
    )
    return shifted, shifts


# ---------------------------------------------------------------------------
# Model priors and enumeration
# ---------------------------------------------------------------------------

def model_log_prior(gamma: ModelIndex, m: int | None = None) -> float:
    """Multiplicity-adjusted log prior probability of ``gamma``.

    Variable selection: every model size is equally likely, and models of
    the same size are exchangeable.  Fractional polynomials: independently
    per covariate, every degree in {0, 1, 2} is equally likely and tuples of
    the same degree are exchangeable, so the null model is the single most
    probable one.
    """
    m = gamma.m if m is None else m
    if m != gamma.m:
        raise ConstructionError(f"m={m} does not match index over {gamma.m} covariates")
    if gamma.kind is ModelKind.VARIABLE_SELECTION:
        return -math.log(m + 1) - math.log(comb(m, gamma.p))
    total = 0.0
    for t in gamma.fp_powers:
        d = len(t)
        total += -math.log(3.0) - math.log(comb(7 + d, d))
    return total


def _fp_tuples() -> tuple[tuple[float, ...], ...]:
    singles = [(p,) for p in FP_POWERS]
    pairs = [tuple(sorted(c)) for c in itertools.combinations_with_replacement(FP_POWERS, 2)]
    return tuple([()] + singles + pairs)


ALL_FP_TUPLES = _fp_tuples()


def space_size(kind: ModelKind, m: int) -> int:
    if ModelKind(kind) is ModelKind.VARIABLE_SELECTION:
        return 2 ** m
    return FP_TUPLES_PER_COVARIATE ** m


def enumerate_models(kind: ModelKind, m: int, cap: int = DEFAULT_ENUMERATION_CAP):
    """Yield every model exactly once, in a deterministic order."""
    kind = ModelKind(kind)
    size = space_size(kind, m)
    if size > cap:
        raise ConstructionError(
            f"{kind.value} space over {m} covariates has {size} models, above the "
            f"enumeration cap {cap}; use the stochastic search instead"
        )
    if kind is ModelKind.VARIABLE_SELECTION:
        for i in range(size):
            yield ModelIndex.from_bits(((i >> k) & 1 for k in range(m)))
    else:
        for combo in itertools.product(ALL_FP_TUPLES, repeat=m):
            yield ModelIndex.from_powers(combo)


# ---------------------------------------------------------------------------
# Neighborhood moves for the stochastic model search
# ---------------------------------------------------------------------------

def _concrete_moves(t: tuple[float, ...]) -> list[tuple[float, ...]]:
    """All single-edit outcomes from one covariate's tuple, with multiplicity.

    Edits: add a power (degree < 2), remove one slot (degree > 0), or
    replace one slot by a different power.  Outcomes repeat when distinct
    slots produce the same canonical tuple; the repeats carry the proposal
    multiplicity needed for exact acceptance ratios.
    """
    moves: list[tuple[float, ...]] = []
    d = len(t)
    if d < 2:
        moves.extend(tuple(sorted(t + (v,))) for v in FP_POWERS)
    for i in range(d):
        rest = t[:i] + t[i + 1 :]
        moves.append(rest)
        moves.extend(tuple(sorted(rest + (v,))) for v in FP_POWERS if v != t[i])
    return moves


def propose_neighbor(gamma: ModelIndex, rng: np.random.Generator) -> tuple[ModelIndex, float]:
    """Draw a neighboring model and return it with log q(old|new) - log q(new|old).

    A covariate is drawn uniformly, then one concrete edit of its tuple is
    drawn uniformly; the ratio uses exact outcome multiplicities on both
    sides (the uniform covariate factor cancels).
    """
    if gamma.kind is not ModelKind.FRACTIONAL_POLYNOMIAL:
        raise UnsupportedOperationError(
            "neighbor proposals are defined for fractional-polynomial spaces; "
            "variable selection uses enumeration"
        )
    k = int(rng.integers(gamma.m))
    old_t = gamma.fp_powers[k]
    moves = _concrete_moves(old_t)
    new_t = moves[int(rng.integers(len(moves)))]
    powers = list(gamma.fp_powers)
    powers[k] = new_t
    neighbor = ModelIndex.from_powers(powers)
    q_fwd = moves.count(new_t) / len(moves)
    rev = _concrete_moves(new_t)
    q_rev = rev.count(old_t) / len(rev)
    return neighbor, math.log(q_rev) - math.log(q_fwd)
