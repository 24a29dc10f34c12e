"""Primitives for products of nonnegative matrices.

All norms are the max-norm on vectors and the induced max-row-sum norm on
matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

POSITIVITY_FLOOR = 1e-300


class DegenerateProductError(ValueError):
    """Raised when a tracked image vector collapses to zero."""


def vec_norm(x) -> float:
    return float(np.max(np.abs(x))) if np.size(x) else 0.0


def mat_norm(a) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.max(np.abs(a).sum(axis=1)))


def _check_positive(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"{name} must be a nonempty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)) or np.any(a < POSITIVITY_FLOOR):
        raise ValueError(f"{name} must be strictly positive (entries >= {POSITIVITY_FLOOR:g})")
    return a


def delta_coefficient(a, b) -> float:
    """min over i,j,k of a[i,j]*b[j,k] / sum_j a[i,j]*b[j,k]."""
    a = _check_positive(a, "a")
    b = _check_positive(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    terms = a[:, :, None] * b[None, :, :]
    return float((terms / terms.sum(axis=1, keepdims=True)).min())


@dataclass(frozen=True)
class PosProductState:
    """Running factorisation H = diag(exp(log_d)) (1 c + phi) of a_1 ... a_n.

    ``stochastic`` is the row-normalised product, from which c and phi are
    read off; ``log_scale`` is max(log_d) so that exp(log_scale) bounds the
    largest row sum. ``c_lower`` and ``c_upper`` bracket c columnwise by the
    extremes of the most recent row-normalised factor.
    """

    m: int
    n: int
    log_d: np.ndarray
    stochastic: np.ndarray
    c: np.ndarray
    residual_bound: float
    direction: np.ndarray
    c_lower: np.ndarray
    c_upper: np.ndarray
    pending_delta: bool = False

    @property
    def log_scale(self) -> float:
        return float(self.log_d.max())

    @property
    def phi(self) -> np.ndarray:
        return self.stochastic - self.c[None, :]

    def reconstruct(self) -> np.ndarray:
        """The product itself; overflows for long products, tests only."""
        return np.exp(self.log_d)[:, None] * (self.c[None, :] + self.phi)


def product_init(m: int) -> PosProductState:
    if m < 1:
        raise ValueError("m must be >= 1")
    eye = np.eye(m)
    u = np.full(m, 1.0 / m)
    return PosProductState(
        m=m, n=0, log_d=np.zeros(m), stochastic=eye, c=u, residual_bound=1.0,
        direction=np.ones(m), c_lower=np.zeros(m), c_upper=np.ones(m),
    )


def product_step(state: PosProductState, a, next=None) -> PosProductState:
    """Right-multiply the running product by ``a``.

    When ``next`` (the factor that will follow ``a``) is given, the residual
    bound is multiplied by 1 - m * delta_coefficient(a, next).
    """
    a = _check_positive(a)
    if a.shape[0] != state.m:
        raise ValueError(f"dimension mismatch: state m={state.m}, factor {a.shape}")
    sa = state.stochastic @ a
    d = sa.sum(axis=1)
    s_new = sa / d[:, None]
    # rows of s_new are convex combinations of rows of the row-normalised a
    a_hat = a / a.sum(axis=1, keepdims=True)
    c = s_new.mean(axis=0)
    c = c / c.sum()
    bound = state.residual_bound
    if next is not None:
        nxt = _check_positive(next, "next")
        bound *= max(0.0, 1.0 - state.m * delta_coefficient(a, nxt))
    log_d = state.log_d + np.log(d)
    # H 1 = diag(exp(log_d)) S 1 and S 1 = 1
    direction = np.exp(log_d - log_d.max())
    return PosProductState(
        m=state.m, n=state.n + 1, log_d=log_d, stochastic=s_new,
        c=c, residual_bound=float(min(bound, state.residual_bound)),
        direction=direction, c_lower=a_hat.min(axis=0), c_upper=a_hat.max(axis=0),
        pending_delta=next is None,
    )


def product_decompose(factors: Sequence) -> PosProductState:
    """Fold product_step over ``factors`` feeding each adjacent pair's delta."""
    factors = [np.asarray(f, dtype=float) for f in factors]
    if not factors:
        raise ValueError("need at least one factor")
    st = product_init(factors[0].shape[0])
    for r, a in enumerate(factors):
        st = product_step(st, a, factors[r + 1] if r + 1 < len(factors) else None)
    return st


def log_norm_product(factors: Iterable, x0) -> tuple[float, np.ndarray]:
    """log ||A_n ... A_1 x0|| with per-step renormalisation.

    ``factors`` is given in application order A_1, A_2, ...
    """
    x = np.asarray(x0, dtype=float).copy()
    nx = vec_norm(x)
    if not nx > 0:
        raise DegenerateProductError("initial vector is zero")
    total = np.log(nx)
    x = x / nx
    for a in factors:
        y = np.asarray(a, dtype=float) @ x
        s = vec_norm(y)
        if not s > 0 or not np.isfinite(s):
            raise DegenerateProductError("image vector collapsed to zero")
        total += np.log(s)
        x = y / s
    return float(total), x


def stability_decay(
    b_seq: Sequence[Callable],
    b_seq_perturbed: Sequence[Callable],
    x1,
    x1p,
    distance: Callable | None = None,
) -> np.ndarray:
    """Distances r_n between the orbits x_{n+1} = b_n(x_n) and x'_{n+1} = b'_n(x'_n).

    r[0] is the distance of the starting points.
    """
    dist = distance or (lambda u, v: float(np.max(np.abs(np.asarray(u) - np.asarray(v)))))
    x, xp = x1, x1p
    out = [dist(x, xp)]
    for f, fp in zip(b_seq, b_seq_perturbed):
        x, xp = f(x), fp(xp)
        out.append(dist(x, xp))
    return np.asarray(out)


def fit_geometric_envelope(r, floor: float = 1e-13) -> dict:
    """Least-squares fit of log r_k = log C + k log c over entries above ``floor``.

    Values below the floor are roundoff and are excluded.
    """
    r = np.asarray(r, dtype=float)
    k = np.arange(len(r))
    mask = r > floor
    if mask.sum() < 3:
        return {"slope": float("nan"), "intercept": float("nan"), "r2": float("nan"),
                "rate": float("nan"), "n_used": int(mask.sum())}
    kk, yy = k[mask], np.log(r[mask])
    slope, intercept = np.polyfit(kk, yy, 1)
    resid = yy - (slope * kk + intercept)
    ss_tot = float(((yy - yy.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2,
            "rate": float(np.exp(slope)), "n_used": int(mask.sum())}
