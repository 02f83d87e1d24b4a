import os
from pathlib import Path

import numpy as np
import pytest

from glmbma.families import Dataset, Family, FamilyLink, Link

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
PIMA_PATH = DATA_DIR / "pima.csv"

requires_pima = pytest.mark.skipif(
    not PIMA_PATH.exists(),
    reason="data/pima.csv not present; run scripts/fetch_pima.py on a machine "
           "with network access to materialize it",
)


def make_rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed))


@pytest.fixture
def rng():
    return make_rng(1234)


def gaussian_dataset(seed=3, n=50, p=3, phi=4.0, weights=None) -> Dataset:
    r = make_rng(seed)
    X = r.normal(size=(n, p))
    beta = r.normal(size=p)
    y = 0.5 + X @ beta + r.normal(size=n) * np.sqrt(phi)
    return Dataset(y=y, X_raw=X, w=weights,
                   family_link=FamilyLink(Family.GAUSSIAN, Link.IDENTITY), phi=phi)


def logistic_dataset(seed=7, n=20, p=1, scale=1.0) -> Dataset:
    r = make_rng(seed)
    X = r.normal(size=(n, p)) * scale
    eta = -0.3 + X @ np.linspace(1.0, 0.5, p)
    y = (r.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    if y.min() == y.max():
        y[0] = 1.0 - y[0]
    return Dataset(y=y, X_raw=X, family_link=FamilyLink(Family.BERNOULLI, Link.LOGIT))


@pytest.fixture
def gauss_ds():
    return gaussian_dataset()


@pytest.fixture
def logit_ds():
    return logistic_dataset()


def load_pima() -> Dataset:
    import pandas as pd

    frame = pd.read_csv(PIMA_PATH)
    covs = ["npreg", "glu", "bp", "skin", "bmi", "ped", "age"]
    return Dataset(
        y=frame["type"].to_numpy(dtype=float),
        X_raw=frame[covs].to_numpy(dtype=float),
        family_link=FamilyLink(Family.BERNOULLI, Link.LOGIT),
        covariate_names=tuple(covs),
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running checks")
