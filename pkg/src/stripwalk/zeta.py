"""The psi recursion, its stationary limit zeta, the mirror recursion and
constant-environment fixed points."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import forward_sweep
from .envgen import EnvWindow, Triple
from .matops import fit_geometric_envelope, mat_norm, vec_norm

BURNIN_CAP = 10_000
PILOT_LEN = 400


class C2ViolationError(ArithmeticError):
    """A linear solve failed; the environment cannot satisfy C2."""


class WindowTooSmallError(ValueError):
    def __init__(self, msg, needed_left=0, needed_right=0):
        super().__init__(msg)
        self.needed_left = needed_left
        self.needed_right = needed_right


@dataclass(frozen=True)
class PsiState:
    psi: np.ndarray
    x: np.ndarray

    @staticmethod
    def identity(m: int) -> "PsiState":
        return PsiState(np.eye(m), np.ones(m))

    @staticmethod
    def uniform(m: int) -> "PsiState":
        x = np.zeros(m)
        x[0] = 1.0
        return PsiState(np.full((m, m), 1.0 / m), x)

    def distance(self, other: "PsiState") -> float:
        return mat_norm(self.psi - other.psi) + vec_norm(self.x - other.x)


def inverse_norm_bound(m: int, epsilon: float, l: int = 1) -> float:
    """Bound on ||(I-R-Q psi)^-1||: sum_k ||R^k|| <= l/eps, times 1/(m eps)."""
    return l / (m * epsilon * epsilon)


def _one(a):
    return np.ascontiguousarray(np.asarray(a, dtype=float)[None])


_EMPTY3 = np.zeros((0, 1, 1))
_EMPTY2 = np.zeros((0, 1))


def psi_step_detail(t: Triple, s: PsiState):
    """One step; returns (new state, B, log ||B x||)."""
    m = t.m
    B = np.zeros((1, m, m))
    f = np.zeros(1)
    psi, x, status = forward_sweep(_one(t.P), _one(t.Q), _one(t.R),
                                   np.ascontiguousarray(s.psi, dtype=float),
                                   np.ascontiguousarray(s.x, dtype=float),
                                   _EMPTY3, _EMPTY2, B, f)
    if status >= 0:
        raise C2ViolationError("singular solve (I - R - Q psi)")
    return PsiState(psi, x), B[0], float(f[0])


def psi_step(t: Triple, s: PsiState, epsilon: float | None = None, l: int = 1) -> PsiState:
    """(psi, x) -> ((I-R-Q psi)^-1 P, normalised (I-R-Q psi)^-1 Q x).

    With ``epsilon`` given, the bound of ``inverse_norm_bound`` on the inverse is
    checked and a violation raises C2ViolationError.
    """
    new, _, _ = psi_step_detail(t, s)
    if epsilon is not None:
        inv = np.linalg.inv(np.eye(t.m) - t.R - t.Q @ s.psi)
        if mat_norm(inv) > inverse_norm_bound(t.m, epsilon, l) * (1 + 1e-12):
            raise C2ViolationError("||(I-R-Q psi)^-1|| exceeds the C2 bound")
    return new


@dataclass(frozen=True)
class SweepResult:
    psi: np.ndarray      # (N, m, m), state entering each layer
    x: np.ndarray        # (N, m)
    B: np.ndarray        # (N, m, m)
    f: np.ndarray        # (N,)
    final: PsiState


def sweep(P, Q, R, start: PsiState, store: bool = True) -> SweepResult:
    n, m = P.shape[0], P.shape[1]
    psi_o = np.empty((n, m, m)) if store else _EMPTY3
    x_o = np.empty((n, m)) if store else _EMPTY2
    B_o = np.empty((n, m, m)) if store else _EMPTY3
    f = np.empty(n)
    psi, x, status = forward_sweep(np.ascontiguousarray(P), np.ascontiguousarray(Q),
                                   np.ascontiguousarray(R),
                                   np.ascontiguousarray(start.psi, dtype=float),
                                   np.ascontiguousarray(start.x, dtype=float),
                                   psi_o, x_o, B_o, f)
    if status >= 0:
        raise C2ViolationError(f"singular solve at offset {status}")
    return SweepResult(psi_o, x_o, B_o, f, PsiState(psi, x))


def _orbit_distances(P, Q, R, s1: PsiState, s2: PsiState) -> np.ndarray:
    r1 = sweep(P, Q, R, s1)
    r2 = sweep(P, Q, R, s2)
    d = (np.abs(r1.psi - r2.psi).sum(axis=2).max(axis=1)
         + np.abs(r1.x - r2.x).max(axis=1))
    dfin = s_distance(r1.final, r2.final)
    return np.append(d, dfin)


def s_distance(a: PsiState, b: PsiState) -> float:
    return a.distance(b)


def contraction_profile(w: EnvWindow, s1: PsiState, s2: PsiState, n: int | None = None) -> np.ndarray:
    """rho_k for k = 1..n: distance after k steps through layers w.a, w.a+1, ..."""
    n = len(w) if n is None else n
    if n > len(w):
        raise ValueError("n exceeds window length")
    d = _orbit_distances(w.P[:n], w.Q[:n], w.R[:n], s1, s2)
    return d[1:]


def burnin_depth(w: EnvWindow, tol: float, pilot_len: int = PILOT_LEN,
                 from_right: bool = False) -> tuple[int, dict]:
    """K = ceil(log(tol / 2C) / log c) from a dual-start pilot run.

    The pilot uses the first (or, for the mirror recursion, last) layers of
    the window; C and c come from a least-squares fit of log rho_k.
    """
    m = w.m
    src = w.mirrored() if from_right else w
    n = min(pilot_len, len(src))
    d = _orbit_distances(src.P[:n], src.Q[:n], src.R[:n], PsiState.identity(m), PsiState.uniform(m))
    fit = fit_geometric_envelope(d)
    if m == 1 or not (fit["n_used"] >= 3) or not np.isfinite(fit["slope"]):
        return 1, fit
    c = fit["rate"]
    C = max(math.exp(fit["intercept"]), 1e-300)
    if c >= 1.0:
        return BURNIN_CAP, fit
    K = math.ceil(math.log(tol / (2.0 * C)) / math.log(c))
    # margin for scatter of the pilot fit
    K = math.ceil(1.25 * K) + 5
    return int(min(max(K, 1), BURNIN_CAP)), fit


@dataclass(frozen=True)
class ZetaSeq:
    """zeta(n), y(n), A(n), f(n) = log ||A(n) y(n)|| for layers a..b."""

    a: int
    b: int
    zeta: np.ndarray
    y: np.ndarray
    A: np.ndarray
    f: np.ndarray
    burnin: int
    tol: float
    certified_error: float
    final: PsiState
    mirror: bool = False

    def idx(self, n: int) -> int:
        if not self.a <= n <= self.b:
            raise IndexError(n)
        return n - self.a

    def zeta_at(self, n):
        return self.zeta[self.idx(n)]

    def A_at(self, n):
        return self.A[self.idx(n)]

    def y_at(self, n):
        return self.y[self.idx(n)]


def zeta_sequence(w: EnvWindow, target_range: tuple[int, int], tol: float = 1e-12,
                  burnin: int | None = None) -> ZetaSeq:
    """zeta on layers a'..b, started at a' - K from identity and certified
    against a second run started from the uniform matrix."""
    a1, b = target_range
    if a1 > b:
        raise ValueError("empty target range")
    if b > w.b:
        raise WindowTooSmallError("target range exceeds window", 0, b - w.b)
    K = burnin if burnin is not None else burnin_depth(w, tol)[0]
    m = w.m
    P, Q, R = w.P, w.Q, w.R
    i1, i2 = w.idx(a1), w.idx(b)
    for attempt in range(2):
        start = a1 - K
        if start < w.a:
            raise WindowTooSmallError(f"window must start at or before {start} (burn-in {K})",
                                      needed_left=w.a - start)
        i0 = w.idx(start)
        pre1 = sweep(P[i0:i1], Q[i0:i1], R[i0:i1], PsiState.identity(m), store=False)
        pre2 = sweep(P[i0:i1], Q[i0:i1], R[i0:i1], PsiState.uniform(m), store=False)
        err = pre1.final.distance(pre2.final) if K > 0 else 0.0
        if m == 1 or err <= tol:
            break
        if attempt == 1 or burnin is not None or K >= BURNIN_CAP:
            raise WindowTooSmallError(
                f"dual-start disagreement {err:.3g} > tol {tol:.3g} at burn-in {K}",
                needed_left=K)
        K = min(2 * K, BURNIN_CAP)
    body = sweep(P[i1:i2 + 1], Q[i1:i2 + 1], R[i1:i2 + 1], pre1.final)
    return ZetaSeq(a1, b, body.psi, body.x, body.B, body.f, K, tol, float(err),
                   body.final)


def zeta_minus_sequence(w: EnvWindow, target_range: tuple[int, int], tol: float = 1e-12,
                        burnin: int | None = None) -> ZetaSeq:
    """Mirror recursion psi-_{n-1} = (I - R_n - P_n psi-_n)^-1 Q_n run leftward.

    zeta(n) holds zeta-_n, A(n) holds (I - R_n - P_n zeta-_n)^-1 P_n and y is
    propagated by y-_{n-1} = A-_n y-_n / ||A-_n y-_n||, f(n) = log ||A-_n y-_n||.
    """
    a1, b = target_range
    K = burnin if burnin is not None else burnin_depth(w, tol, from_right=True)[0]
    if b + K > w.b:
        raise WindowTooSmallError(f"window must end at or after {b + K} (burn-in {K})",
                                  needed_right=b + K - w.b)
    if a1 < w.a:
        raise WindowTooSmallError("target range exceeds window", a1 - w.a, 0)
    zm = zeta_sequence(w.mirrored(), (-b, -a1), tol, burnin=K)
    rev = lambda arr: np.ascontiguousarray(arr[::-1])
    return ZetaSeq(a1, b, rev(zm.zeta), rev(zm.y), rev(zm.A), rev(zm.f), K, tol,
                   zm.certified_error, zm.final, mirror=True)


def dominant_eigenpair(A, tol: float = 1e-14, max_iter: int = 10_000):
    """Perron pair of a positive matrix by power iteration (max-norm normalised).

    Repeated squaring gets close quickly; plain iterations then polish until
    the eigenvalue drift is below ``tol``. Returns (y, log eigenvalue, iters).
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[0]
    M = A / mat_norm(A)
    for _ in range(60):
        M2 = M @ M
        M2 /= mat_norm(M2)
        if np.max(np.abs(M2 - M)) < 1e-16:
            M = M2
            break
        M = M2
    y = M @ np.ones(m)
    y /= vec_norm(y)
    lam_prev = math.inf
    for it in range(1, max_iter + 1):
        v = A @ y
        s = vec_norm(v)
        y_new = v / s
        lam = math.log(s)
        if abs(lam - lam_prev) <= tol and vec_norm(y_new - y) <= max(tol, 1e-15) * 10:
            return y_new, lam, it
        y, lam_prev = y_new, lam
    return y, lam_prev, max_iter


@dataclass(frozen=True)
class FixedPoint:
    zeta: np.ndarray
    y: np.ndarray
    lam: float
    A: np.ndarray
    residual: float
    iterations: int
    converged: bool


def fixed_point_constant(t: Triple, tol: float = 1e-14, max_iter: int = 100_000) -> FixedPoint:
    """zeta = (I - R - Q zeta)^-1 P and A y = e^lambda y for a constant environment."""
    s = PsiState.identity(t.m)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = psi_step(t, s)
        diff = mat_norm(new.psi - s.psi)
        s = new
        if diff <= tol:
            converged = True
            break
    z = s.psi
    eye = np.eye(t.m)
    A = np.linalg.solve(eye - t.R - t.Q @ z, t.Q)
    res = mat_norm(np.linalg.solve(eye - t.R - t.Q @ z, t.P) - z)
    y, lam, _ = dominant_eigenpair(A, tol=min(tol, 1e-14))
    return FixedPoint(z, y, lam, A, res, it, converged)
