"""Quick invariant checks across the library (a few seconds)."""

from __future__ import annotations

import math

import numpy as np

from .envgen import EnvSpec, constant_window, discrete_spec, sample_window, scalar_triple
from .lyap import lyapunov_estimate
from .matops import product_decompose
from .potential import potential_profile
from .walk.chain import reflected_window, simulate_batch
from .walk.solvers import (dense_generator, expected_exit_time, hitting_probabilities,
                           invmeas_residual, stationary_measure_reflected)
from .zeta import PsiState, contraction_profile


def _scalar_lambda():
    est = lyapunov_estimate(discrete_spec([scalar_triple(0.6, 0.4)], [1.0]), 2000, burnin=10)
    err = abs(est.lambda_hat - math.log(2 / 3))
    return err <= 1e-9, err


def _gamblers_ruin():
    p = 0.6
    w = constant_window(scalar_triple(p, 1 - p), 0, 20)
    h = hitting_probabilities(reflected_window(w, 0, 20))[:, 0]
    r = (1 - p) / p
    k = np.arange(21)
    exact = (1 - r ** k) / (1 - r ** 20)
    err = float(np.max(np.abs(h - exact)))
    return err <= 1e-12, err


def _solvers_dense():
    spec = EnvSpec(m=2, epsilon=0.05, kind="dirichlet")
    w = reflected_window(sample_window(spec, 3, 0, 15), 0, 15)
    T = dense_generator(w)
    m, n = 2, 16 * 2
    inner = np.arange(m, n - m)
    A = np.eye(len(inner)) - T[np.ix_(inner, inner)]
    hb = np.linalg.solve(A, T[inner, n - m:].sum(axis=1))
    eb = np.linalg.solve(A, np.ones(len(inner)))
    err = max(float(np.max(np.abs(hitting_probabilities(w)[1:-1].ravel() - hb))),
              float(np.max(np.abs(expected_exit_time(w)[1:-1].ravel() - eb)) / eb.max()))
    return err <= 1e-10, err


def _invmeas():
    spec = EnvSpec(m=3, epsilon=0.05, kind="dirichlet")
    w = reflected_window(sample_window(spec, 5, -40, 40), -40, 40)
    r = invmeas_residual(w, stationary_measure_reflected(w))
    return r <= 1e-10, r


def _contraction():
    spec = EnvSpec(m=2, epsilon=0.05, kind="dirichlet")
    w = sample_window(spec, 1, 0, 200)
    rho = contraction_profile(w, PsiState.identity(2), PsiState.uniform(2), 100)
    return rho[-1] <= 1e-8, float(rho[-1])


def _product():
    rng = np.random.default_rng(7)
    fs = rng.uniform(0.1, 1.0, size=(30, 3, 3))
    st = product_decompose(fs)
    exact = np.linalg.multi_dot(list(fs))
    err = float(np.max(np.abs(st.reconstruct() - exact)) / np.max(np.abs(exact)))
    return err <= 1e-9, err


def _potential_mirror():
    spec = EnvSpec(m=2, epsilon=0.05, kind="dirichlet")
    prof = potential_profile(sample_window(spec, 2, -600, 600), a=-300, b=300)
    gap = float(np.max(np.abs(prof.phi - prof.phi_minus)))
    return math.isfinite(gap) and prof.phi_at(0) == 0.0, gap


def _walk_repro():
    spec = discrete_spec([scalar_triple(0.3, 0.7), scalar_triple(0.7, 0.3)], [0.5, 0.5])
    w = sample_window(spec, 4, -2000, 2000)
    r1 = simulate_batch(w, 0, 1, 5000, 9, np.arange(16), workers=1, chunk=3)
    r2 = simulate_batch(w, 0, 1, 5000, 9, np.arange(16), workers=4, chunk=5)
    same = all(np.array_equal(r1[k], r2[k]) for k in r1)
    return same, int(same)


CHECKS = {
    "scalar-lambda": _scalar_lambda,
    "gamblers-ruin": _gamblers_ruin,
    "solvers-vs-dense": _solvers_dense,
    "stationary-balance": _invmeas,
    "psi-contraction": _contraction,
    "product-decomposition": _product,
    "potential-mirror": _potential_mirror,
    "walk-reproducibility": _walk_repro,
}


def run_selftest():
    """[(name, passed, measured value)] for every check."""
    out = []
    for name, fn in CHECKS.items():
        ok, val = fn()
        out.append((name, bool(ok), float(val)))
    return out
