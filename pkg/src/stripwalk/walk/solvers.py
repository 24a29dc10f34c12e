"""Exact solvers on a finite window: hitting probabilities, exit times and
the stationary measure of the reflected chain.

Layer k of a window [a, b] is stored at index k - a. Hitting probabilities
and exit times concern the chain absorbed at layers a and b, so they only
use the interior triples; the stationary measure uses the reflected
boundary triples (I, 0, 0) at a and (0, I, 0) at b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..envgen import EnvWindow


class SingularSolveError(np.linalg.LinAlgError):
    """A layer matrix I - R - Q phi was singular (Condition C2 cannot hold)."""


@dataclass(frozen=True)
class HittingSolution:
    a: int
    b: int
    h: np.ndarray          # (N, m): Pr(reach layer b before layer a)
    e: np.ndarray          # (N, m): expected time to reach layer a or b
    pi_ab: np.ndarray      # (N, m): stationary law of the reflected chain

    def at(self, k: int):
        i = k - self.a
        return self.h[i], self.e[i], self.pi_ab[i]


def _solve(M, B):
    try:
        X = np.linalg.solve(M, B)
    except np.linalg.LinAlgError as exc:
        raise SingularSolveError(str(exc)) from None
    if not np.all(np.isfinite(X)):
        raise SingularSolveError("non-finite solution")
    return X


def _check(w: EnvWindow, need: int):
    if w.b - w.a < need:
        raise ValueError(f"window [{w.a}, {w.b}] needs b - a >= {need}")


def phi_sweep(w: EnvWindow):
    """phi_{a+1} = 0 and phi_{k+1} = (I - Q_k phi_k - R_k)^{-1} P_k.

    Also returns d_k = B_k d_{k-1} + u_k with B_k = M_k^{-1} Q_k and
    u_k = M_k^{-1} 1, the offsets of the exit-time sweep. Entry j of each
    output array refers to layer a + j (phi[j] is phi_{a+j}).
    """
    _check(w, 1)
    m, N = w.m, len(w)
    eye, one = np.eye(m), np.ones(m)
    phi = np.zeros((N, m, m))
    d = np.zeros((N, m))
    for j in range(1, N - 1):
        M = eye - w.R[j] - w.Q[j] @ phi[j]
        X = _solve(M, np.column_stack([w.P[j], w.Q[j] @ d[j - 1] + one]))
        phi[j + 1] = X[:, :m]
        d[j] = X[:, m]
    return phi, d


def hitting_probabilities(w: EnvWindow) -> np.ndarray:
    """h(k)(i) = Pr_{(k,i)}(reach layer b before layer a) = phi_{k+1}...phi_b 1."""
    phi, _ = phi_sweep(w)
    N, m = len(w), w.m
    h = np.zeros((N, m))
    h[-1] = 1.0
    for j in range(N - 2, 0, -1):
        h[j] = phi[j + 1] @ h[j + 1]
    return h


def expected_exit_time(w: EnvWindow) -> np.ndarray:
    """e(k) with e(a) = e(b) = 0 and e_k = P_k e_{k+1} + R_k e_k + Q_k e_{k-1} + 1."""
    phi, d = phi_sweep(w)
    N, m = len(w), w.m
    e = np.zeros((N, m))
    for j in range(N - 2, 0, -1):
        e[j] = phi[j + 1] @ e[j + 1] + d[j]
    return e


def exit_time_residual(w: EnvWindow, e: np.ndarray) -> float:
    """Largest defect of the exit-time equation over interior layers."""
    r = 0.0
    for j in range(1, len(w) - 1):
        rhs = w.P[j] @ e[j + 1] + w.R[j] @ e[j] + w.Q[j] @ e[j - 1] + 1.0
        r = max(r, float(np.max(np.abs(e[j] - rhs))))
    return r


def _perron_left(M: np.ndarray) -> np.ndarray:
    """Positive left fixed vector of a nonnegative M with spectral radius 1."""
    m = M.shape[0]
    A = np.vstack([(M - np.eye(m)).T, np.ones((1, m))])
    rhs = np.zeros(m + 1)
    rhs[-1] = 1.0
    v = np.linalg.lstsq(A, rhs, rcond=None)[0]
    v = v + np.linalg.lstsq(A, rhs - A @ v, rcond=None)[0]
    if np.any(v < -1e-12):
        raise SingularSolveError("boundary matrix is not irreducible")
    return np.maximum(v, 0.0)


def stationary_log_mass(w: EnvWindow):
    """Stationary measure of the reflected chain as (log layer scale, shape).

    ``nu_k = exp(logs[k]) * shape[k]`` with each shape row summing to 1.
    The recursion nu_k = nu_{k+1} alpha_k is evaluated through the
    factorisation alpha_{b-1}...alpha_k = B_{b-1}...B_{k+1} M_k^{-1}, where
    psi_{a+1} = I, M_k = I - R_k - Q_k psi_k, psi_{k+1} = M_k^{-1} P_k and
    B_k = M_k^{-1} Q_k. nu_b is the left fixed vector of the stochastic psi_b
    and nu_a = nu_{a+1} Q_{a+1}. Multiplying alpha directly loses accuracy
    over long windows; the normalised B-products do not.
    """
    _check(w, 2)
    m, N = w.m, len(w)
    eye = np.eye(m)
    M = np.zeros((N, m, m))
    B = np.zeros((N, m, m))
    psi = eye.copy()
    for j in range(1, N - 1):
        M[j] = eye - w.R[j] - w.Q[j] @ psi
        X = _solve(M[j], np.hstack([w.P[j], w.Q[j]]))
        psi = X[:, :m] / X[:, :m].sum(axis=1, keepdims=True)
        B[j] = X[:, m:]
    shape = np.zeros((N, m))
    logs = np.zeros(N)
    shape[-1] = _perron_left(psi)
    v = shape[-1].copy()          # w_{b-1} = nu_b, then w_k = w_{k+1} B_{k+1}
    lw = 0.0
    for j in range(N - 2, 0, -1):
        if j < N - 2:
            v = v @ B[j + 1]
            s = v.sum()
            if not s > 0:
                raise SingularSolveError("stationary recursion lost positivity")
            v = v / s
            lw += np.log(s)
        nu = _solve(M[j].T, v)
        s = nu.sum()
        if not s > 0:
            raise SingularSolveError("stationary recursion lost positivity")
        shape[j] = nu / s
        logs[j] = lw + np.log(s)
    nu = shape[1] @ w.Q[1]
    s = nu.sum()
    shape[0] = nu / s
    logs[0] = logs[1] + np.log(s)
    return logs, shape


def stationary_measure_reflected(w: EnvWindow, tol: float = 1e-10) -> np.ndarray:
    """Normalised stationary law pi_ab (N, m) of the chain reflected at a and b.

    ``w`` must already carry the reflected boundary triples (see
    ``reflected_window``). Raises if the balance residual exceeds ``tol``.
    """
    logs, shape = stationary_log_mass(w)
    wts = np.exp(logs - logs.max())
    pi = wts[:, None] * shape
    pi /= pi.sum()
    r = invmeas_residual(w, pi)
    if r > tol:
        raise SingularSolveError(f"stationary balance residual {r:.3g} exceeds {tol:.1g}")
    return pi


def invmeas_residual(w: EnvWindow, nu: np.ndarray) -> float:
    """max_k |nu_k - (nu_{k-1} P_{k-1} + nu_k R_k + nu_{k+1} Q_{k+1})| / |nu_k|."""
    N = len(w)
    r = 0.0
    for j in range(N):
        rhs = nu[j] @ w.R[j]
        if j > 0:
            rhs = rhs + nu[j - 1] @ w.P[j - 1]
        if j < N - 1:
            rhs = rhs + nu[j + 1] @ w.Q[j + 1]
        scale = max(np.max(np.abs(nu[j])), np.finfo(float).tiny)
        r = max(r, float(np.max(np.abs(nu[j] - rhs)) / scale))
    return r


def solve_window(w: EnvWindow) -> HittingSolution:
    """h, e and pi_ab on the reflected window w."""
    return HittingSolution(w.a, w.b, hitting_probabilities(w), expected_exit_time(w),
                           stationary_measure_reflected(w))


def layer_log_mass(pi: np.ndarray) -> np.ndarray:
    return np.log(pi.sum(axis=1))


def dense_generator(w: EnvWindow) -> np.ndarray:
    """Full (N m) x (N m) transition matrix of the chain on the window."""
    m, N = w.m, len(w)
    T = np.zeros((N * m, N * m))
    for j in range(N):
        r = slice(j * m, (j + 1) * m)
        T[r, r] += w.R[j]
        if j + 1 < N:
            T[r, (j + 1) * m:(j + 2) * m] += w.P[j]
        elif np.any(w.P[j]):
            raise ValueError("P at the top layer must vanish")
        if j > 0:
            T[r, (j - 1) * m:j * m] += w.Q[j]
        elif np.any(w.Q[j]):
            raise ValueError("Q at the bottom layer must vanish")
    return T
