"""Bayesian model selection and averaging for generalized linear models
under automatic shrinkage priors with a hyperprior on the covariance factor."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: F401
    BracketError,
    ConstructionError,
    ConvergenceError,
    DataError,
    EvaluationError,
    GlmBmaError,
    OverflowRangeError,
    SingularMatrixError,
    UnsupportedOperationError,
)
from .families import Dataset, Family, FamilyLink, Link, link_constant  # noqa: F401
from .hyperpriors import HyperPrior  # noqa: F401
from .modelspace import DesignMatrix, ModelIndex, ModelKind, build_design  # noqa: F401
from .evidence import MargLikResult, cond_log_marglik, log_marglik, null_model_marglik  # noqa: F401
from .sampler import ChainConfig, PosteriorDraws, chib_jeliazkov, run_chain  # noqa: F401
from .search import (  # noqa: F401
    ModelPosterior,
    exhaustive_posterior,
    g_posterior_summary,
    inclusion_probabilities,
    map_and_median_models,
    mc3_search,
    model_average_fit,
)
