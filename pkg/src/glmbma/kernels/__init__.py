"""Kernel backend selection.

The compiled extension covers the canonical family codes (0, 1, 2), which
dominate every stochastic-search workload; other links and builds without a
compiler fall back to the NumPy reference implementation.  Set
``GLMBMA_PURE_PYTHON=1`` to force the fallback everywhere.
"""

import os

from . import _ref
from ._ref import (  # noqa: F401
    STATUS_MAX_ITER,
    STATUS_NONFINITE,
    STATUS_OK,
    STATUS_SINGULAR,
)

_compiled = None
if os.environ.get("GLMBMA_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _core as _compiled  # type: ignore[attr-defined]
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
_COMPILED_CODES = frozenset((0, 1, 2))


def iwls(xt, y, w, phi, code, c, g, start, max_iter, tol, prior_gram, one_step):
    if _compiled is not None and code in _COMPILED_CODES:
        return _compiled.iwls(xt, y, w, phi, code, c, g, start, max_iter, tol,
                              prior_gram, one_step)
    return _ref.iwls(xt, y, w, phi, code, c, g, start, max_iter, tol,
                     prior_gram, one_step)


def loglik(xt, beta, y, w, phi, code):
    if _compiled is not None and code in _COMPILED_CODES:
        return _compiled.loglik(xt, beta, y, w, phi, code)
    return _ref.loglik(xt, beta, y, w, phi, code)


def loglik_eta(eta, y, w, phi, code):
    return _ref.loglik_eta(eta, y, w, phi, code)


def correction_factor(xt, beta, w, phi, code, L):
    if _compiled is not None and code in _COMPILED_CODES:
        return _compiled.correction_factor(xt, beta, w, phi, code, L)
    return _ref.correction_factor(xt, beta, w, phi, code, L)
