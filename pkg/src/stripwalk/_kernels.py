"""numba kernels shared by the zeta, lyap, potential and walk modules.

Matrices are tiny (m <= 16) so solves use a hand-rolled LU with partial
pivoting and one step of iterative refinement instead of LAPACK calls, which
dominate the cost at this size.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def lu_factor(M):
    """In-place LU with partial pivoting. Returns (LU, piv, ok)."""
    m = M.shape[0]
    LU = M.copy()
    piv = np.arange(m)
    for k in range(m):
        p = k
        big = abs(LU[k, k])
        for i in range(k + 1, m):
            if abs(LU[i, k]) > big:
                big = abs(LU[i, k])
                p = i
        if big == 0.0:
            return LU, piv, False
        if p != k:
            for j in range(m):
                tmp = LU[k, j]
                LU[k, j] = LU[p, j]
                LU[p, j] = tmp
            tp = piv[k]
            piv[k] = piv[p]
            piv[p] = tp
        inv = 1.0 / LU[k, k]
        for i in range(k + 1, m):
            LU[i, k] *= inv
            f = LU[i, k]
            if f != 0.0:
                for j in range(k + 1, m):
                    LU[i, j] -= f * LU[k, j]
    return LU, piv, True


@njit(cache=True, nogil=True)
def lu_apply(LU, piv, B):
    m = LU.shape[0]
    ncol = B.shape[1]
    X = np.empty_like(B)
    for i in range(m):
        for c in range(ncol):
            X[i, c] = B[piv[i], c]
    for i in range(m):
        for k in range(i):
            f = LU[i, k]
            for c in range(ncol):
                X[i, c] -= f * X[k, c]
    for i in range(m - 1, -1, -1):
        for k in range(i + 1, m):
            f = LU[i, k]
            for c in range(ncol):
                X[i, c] -= f * X[k, c]
        inv = 1.0 / LU[i, i]
        for c in range(ncol):
            X[i, c] *= inv
    return X


@njit(cache=True, nogil=True)
def solve_refined(M, B):
    """Solve M X = B; one residual-correction pass. ok=False if singular."""
    LU, piv, ok = lu_factor(M)
    if not ok:
        return B.copy(), False
    X = lu_apply(LU, piv, B)
    Rs = B - M @ X
    X += lu_apply(LU, piv, Rs)
    for i in range(X.shape[0]):
        for c in range(X.shape[1]):
            if not np.isfinite(X[i, c]):
                return X, False
    return X, True


@njit(cache=True, nogil=True)
def _renormalise_rows(psi):
    # The exact iterate is stochastic; a row-sum defect eta would otherwise
    # propagate as B eta and grow with the potential.
    m = psi.shape[0]
    for i in range(m):
        s = 0.0
        for j in range(m):
            s += psi[i, j]
        for j in range(m):
            psi[i, j] /= s


@njit(cache=True, nogil=True)
def forward_sweep(P, Q, R, psi0, x0, psi_out, x_out, B_out, f_out):
    """Run (psi, x) -> ((I-R-Q psi)^-1 P, normalised (I-R-Q psi)^-1 Q x).

    Layer k of the arrays is applied to the state *entering* layer k.
    psi_out[k], x_out[k] receive that entering state and B_out[k] the matrix
    (I-R_k-Q_k psi_k)^-1 Q_k; pass zero-length arrays to skip storage.
    f_out[k] = log ||B_k x_k|| (max-norm). Returns (psi, x, status) where
    status is -1 on success or the first layer at which the solve failed.
    """
    n = P.shape[0]
    m = P.shape[1]
    psi = psi0.copy()
    x = x0.copy()
    store_psi = psi_out.shape[0] == n
    store_x = x_out.shape[0] == n
    store_B = B_out.shape[0] == n
    eye = np.eye(m)
    rhs = np.empty((m, 2 * m))
    for k in range(n):
        if store_psi:
            psi_out[k] = psi
        if store_x:
            x_out[k] = x
        M = eye - R[k] - Q[k] @ psi
        rhs[:, :m] = P[k]
        rhs[:, m:] = Q[k]
        X, ok = solve_refined(M, rhs)
        if not ok:
            return psi, x, k
        B = np.ascontiguousarray(X[:, m:])
        v = B @ x
        s = 0.0
        for i in range(m):
            if abs(v[i]) > s:
                s = abs(v[i])
        if not (s > 0.0):
            return psi, x, k
        if store_B:
            B_out[k] = B
        f_out[k] = np.log(s)
        psi = np.ascontiguousarray(X[:, :m])
        _renormalise_rows(psi)
        x = v / s
    return psi, x, -1


@njit(cache=True, nogil=True)
def psi_only_sweep(P, Q, R, psi0, psi_out):
    """psi recursion only; psi_out[k] is the state entering layer k."""
    n = P.shape[0]
    m = P.shape[1]
    psi = psi0.copy()
    eye = np.eye(m)
    for k in range(n):
        psi_out[k] = psi
        X, ok = solve_refined(eye - R[k] - Q[k] @ psi, P[k].copy())
        if not ok:
            return psi, k
        psi = X
        _renormalise_rows(psi)
    return psi, -1
