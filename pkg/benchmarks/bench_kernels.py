#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-NumPy fallback.

Times the hot operations at the scale of a realistic logistic sweep
(n = 532 observations, 8 design columns): a single weighted-least-squares
step, a converged fit, the higher-order correction factor, and one full
per-model evidence evaluation (mode search + 20-node quadrature).

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

import glmbma.kernels as kernels
from glmbma.kernels import _ref
from glmbma.evidence import ModelWorkspace
from glmbma.families import Dataset, Family, FamilyLink, Link
from glmbma.hyperpriors import HyperPrior
from glmbma.iwls import augment_design

try:
    from glmbma.kernels import _core
except ImportError:
    _core = None


def make_problem(n=532, p=8, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    eta = -0.8 + X @ np.linspace(0.8, -0.4, p)
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    ds = Dataset(y=y, X_raw=X, family_link=FamilyLink(Family.BERNOULLI, Link.LOGIT))
    return ds, X - X.mean(axis=0)


def timeit(fn, min_time=0.4):
    fn()  # warm up
    start = time.perf_counter()
    calls = 0
    while time.perf_counter() - start < min_time:
        fn()
        calls += 1
    return (time.perf_counter() - start) / calls


def main():
    ds, X = make_problem()
    xt, gram = augment_design(ds, X)
    start = np.zeros(X.shape[1] + 1)
    g = 25.0
    backends = [("python", _ref)] + ([("compiled", _core)] if _core else [])

    rows = []
    for label, mod in backends:
        t_one = timeit(lambda m=mod: m.iwls(xt, ds.y, ds.w, ds.phi, 1, 4.0, g,
                                            start, 1, 1e-10, gram, True))
        t_fit = timeit(lambda m=mod: m.iwls(xt, ds.y, ds.w, ds.phi, 1, 4.0, g,
                                            start, 50, 1e-10, gram, False))
        beta, L, *_ = mod.iwls(xt, ds.y, ds.w, ds.phi, 1, 4.0, g, start, 50,
                               1e-10, gram, False)
        t_corr = timeit(lambda m=mod, b=beta, Lf=np.asarray(L):
                        m.correction_factor(xt, b, ds.w, ds.phi, 1, Lf))
        rows.append((label, t_one, t_fit, t_corr))

    hp = HyperPrior.zellner_siow(ds.n)
    evid_rows = []
    for label in [b[0] for b in backends]:
        saved = kernels._compiled
        kernels._compiled = None if label == "python" else saved
        try:
            t_ev = timeit(lambda: ModelWorkspace(ds, X).log_marglik(hp, 6, 20),
                          min_time=1.0)
        finally:
            kernels._compiled = saved
        evid_rows.append((label, t_ev))

    print(f"\nLogistic problem: n={ds.n}, columns={X.shape[1]} (+ intercept)")
    print(f"{'backend':<10} {'one step':>12} {'converged fit':>15} {'correction':>12}")
    for label, t_one, t_fit, t_corr in rows:
        print(f"{label:<10} {t_one * 1e6:>10.1f}us {t_fit * 1e6:>13.1f}us {t_corr * 1e6:>10.1f}us")
    if len(rows) == 2:
        print(f"{'speedup':<10} {rows[0][1] / rows[1][1]:>11.1f}x "
              f"{rows[0][2] / rows[1][2]:>14.1f}x {rows[0][3] / rows[1][3]:>11.1f}x")
    print(f"\n{'backend':<10} {'per-model evidence':>20}")
    for label, t_ev in evid_rows:
        print(f"{label:<10} {t_ev * 1e3:>18.2f}ms")
    if len(evid_rows) == 2:
        print(f"{'speedup':<10} {evid_rows[0][1] / evid_rows[1][1]:>19.1f}x")

    # numerical parity between the backends
    if _core is not None:
        b1, L1, d1, l1, *_ = _ref.iwls(xt, ds.y, ds.w, ds.phi, 1, 4.0, g, start,
                                       50, 1e-10, gram, False)
        b2, L2, d2, l2, *_ = _core.iwls(xt, ds.y, ds.w, ds.phi, 1, 4.0, g, start,
                                        50, 1e-10, gram, False)
        print(f"\nbackend agreement: |d_beta|={np.abs(b1 - b2).max():.2e} "
              f"|d_logdet|={abs(d1 - d2):.2e} |d_loglik|={abs(l1 - l2):.2e}")


if __name__ == "__main__":
    main()
