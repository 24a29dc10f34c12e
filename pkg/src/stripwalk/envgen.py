"""Environments on the strip: triples, laws, seeded windows and the 1D lift."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, special

from ._rng import STREAM_LAYER, STREAM_SITE, derive_key, uniforms
from .matops import mat_norm

STOCH_TOL = 1e-12
JAL_TOL = 1e-10


class SpecError(ValueError):
    """The environment description is invalid."""


def _as_square(a, m=None, name="matrix"):
    a = np.array(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SpecError(f"{name} must be square, got shape {a.shape}")
    if m is not None and a.shape[0] != m:
        raise SpecError(f"{name} must be {m}x{m}, got {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class Triple:
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        P = _as_square(self.P, name="P")
        m = P.shape[0]
        Q = _as_square(self.Q, m, "Q")
        R = _as_square(self.R, m, "R")
        for name, a in (("P", P), ("Q", Q), ("R", R)):
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise SpecError(f"{name} must be finite and nonnegative")
            a.setflags(write=False)
        rows = (P + Q + R).sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > STOCH_TOL:
            raise SpecError(f"(P+Q+R)1 != 1 (max deviation {np.max(np.abs(rows - 1.0)):.3g})")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @property
    def m(self) -> int:
        return self.P.shape[0]

    def mirrored(self) -> "Triple":
        return Triple(self.Q, self.P, self.R)

    def __eq__(self, other):
        return (isinstance(other, Triple) and np.array_equal(self.P, other.P)
                and np.array_equal(self.Q, other.Q) and np.array_equal(self.R, other.R))

    def __hash__(self):
        return hash((self.P.tobytes(), self.Q.tobytes(), self.R.tobytes()))


@dataclass(frozen=True)
class C2Report:
    epsilon: float
    l: int
    r_power_norm: float
    p_margin: float
    q_margin: float
    r_ok: bool
    p_ok: bool
    q_ok: bool

    @property
    def ok(self) -> bool:
        return self.r_ok and self.p_ok and self.q_ok

    def failing_clauses(self) -> list[str]:
        out = []
        if not self.r_ok:
            out.append(f"||R^l|| <= 1-eps (||R^{self.l}|| = {self.r_power_norm:.6g})")
        if not self.p_ok:
            out.append(f"(I-R)^-1 P >= eps (min entry {self.p_margin:.6g})")
        if not self.q_ok:
            out.append(f"(I-R)^-1 Q >= eps (min entry {self.q_margin:.6g})")
        return out


def validate_condition_c2(t: Triple, epsilon: float, l: int = 1) -> C2Report:
    if l < 1:
        raise SpecError("l must be >= 1")
    rn = mat_norm(np.linalg.matrix_power(t.R, l))
    eye = np.eye(t.m)
    try:
        if rn >= 1.0:
            raise np.linalg.LinAlgError
        iv = np.linalg.solve(eye - t.R, np.hstack([t.P, t.Q]))
        pm = float(iv[:, : t.m].min())
        qm = float(iv[:, t.m:].min())
        singular = not np.all(np.isfinite(iv))
    except np.linalg.LinAlgError:
        pm = qm = float("nan")
        singular = True
    if singular:
        # a singular I - R counts as a failure of the R clause
        return C2Report(epsilon, l, max(rn, 1.0), pm, qm, False, False, False)
    return C2Report(epsilon, l, rn, pm, qm, rn <= 1.0 - epsilon, pm >= epsilon, qm >= epsilon)


def stationary_pi(t: Triple, tol: float = 1e-12) -> np.ndarray:
    """Left fixed probability vector of P+Q+R."""
    M = t.P + t.Q + t.R
    m = t.m
    if m == 1:
        return np.ones(1)
    A = (M - np.eye(m)).T
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-2] < 1e-10:
        raise SpecError("P+Q+R is not irreducible: the fixed vector is not unique")
    B = np.vstack([A, np.ones((1, m))])
    rhs = np.zeros(m + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(B, rhs, rcond=None)
    # one refinement on the normal system
    pi += np.linalg.lstsq(B, rhs - B @ pi, rcond=None)[0]
    if np.any(pi < -tol):
        raise SpecError("stationary vector has negative entries")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def jal_distance(t: Triple) -> float:
    """pi (P - Q) 1."""
    pi = stationary_pi(t)
    return float(pi @ (t.P - t.Q).sum(axis=1))


def in_jal(t: Triple, tol: float = JAL_TOL) -> bool:
    return abs(jal_distance(t)) <= tol


def jal_projection(t0: Triple, t1: Triple, xtol: float = 1e-15) -> Triple:
    """Point of the segment (1-s) t0 + s t1 lying on the algebraic surface.

    The drifts of t0 and t1 must have opposite signs. Convex combinations of
    stochastic triples stay stochastic, and positivity carries over.
    """
    g0, g1 = jal_distance(t0), jal_distance(t1)
    if g0 == 0.0:
        return t0
    if g0 * g1 > 0:
        raise SpecError("the two triples must have drifts of opposite sign")

    def mix(s):
        return Triple((1 - s) * t0.P + s * t1.P, (1 - s) * t0.Q + s * t1.Q,
                      (1 - s) * t0.R + s * t1.R)

    s = optimize.brentq(lambda s: jal_distance(mix(s)), 0.0, 1.0, xtol=xtol, maxiter=500)
    return mix(s)


# ---------------------------------------------------------------------------
# one-dimensional model

@dataclass(frozen=True, eq=False)
class OneDSpec:
    """i.i.d. site law for the 1D walk with jumps in [-m, m].

    ``vectors[k]`` holds p(-m), ..., p(m) of atom k.
    """

    m: int
    vectors: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        vec = np.array(self.vectors, dtype=float)
        if vec.ndim == 1:
            vec = vec[None, :]
        if self.m < 1:
            raise SpecError("m must be >= 1")
        if vec.shape[1] != 2 * self.m + 1:
            raise SpecError(f"p-vectors must have length 2m+1 = {2 * self.m + 1}")
        if np.any(vec < 0) or np.max(np.abs(vec.sum(axis=1) - 1.0)) > STOCH_TOL:
            raise SpecError("each p-vector must be a probability vector")
        pr = _check_probs(self.probs, vec.shape[0])
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "probs", pr)

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(-self.m, self.m + 1)

    def drifts(self) -> np.ndarray:
        return self.vectors @ self.offsets

    def step_variances(self) -> np.ndarray:
        return self.vectors @ (self.offsets.astype(float) ** 2)


def jal1d_drift(p) -> float:
    """sum_j j p(j) for p indexed -m..m."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or len(p) % 2 != 1:
        raise SpecError("p must have odd length 2m+1")
    m = (len(p) - 1) // 2
    return float(np.arange(-m, m + 1) @ p)


def _lift_index(m):
    """Gather indices turning per-lane site vectors into (P, R, Q) blocks."""
    i = np.arange(m)[:, None]
    j = np.arange(m)[None, :]
    offs = {"P": m + j - i, "R": j - i, "Q": -m + j - i}
    out = {}
    for k, off in offs.items():
        valid = (off >= -m) & (off <= m)
        out[k] = (np.where(valid, off + m, 0), valid)
    return out


def lift_sites(site_vectors: np.ndarray, m: int):
    """site_vectors (N, m, 2m+1) -> P, Q, R arrays (N, m, m)."""
    sv = np.asarray(site_vectors, dtype=float)
    idx = _lift_index(m)
    lane = np.arange(m)[:, None]
    blocks = {}
    for k, (col, valid) in idx.items():
        blocks[k] = np.where(valid[None], sv[:, lane, col], 0.0)
    return blocks["P"], blocks["Q"], blocks["R"]


def lift_vector(p, m: int) -> Triple:
    """Triple of a layer whose m sites all carry the vector p."""
    sv = np.broadcast_to(np.asarray(p, dtype=float), (1, m, 2 * m + 1))
    P, Q, R = lift_sites(sv, m)
    return Triple(P[0], Q[0], R[0])


# ---------------------------------------------------------------------------
# laws and windows

def _check_probs(probs, k):
    pr = np.array(probs, dtype=float).reshape(-1)
    if len(pr) != k:
        raise SpecError(f"expected {k} probabilities, got {len(pr)}")
    if np.any(pr < 0) or abs(pr.sum() - 1.0) > 1e-12:
        raise SpecError("probabilities must be nonnegative and sum to 1")
    pr.setflags(write=False)
    return pr


def _pick(u, probs):
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(probs) - 1)


@dataclass(frozen=True, eq=False)
class EnvSpec:
    """Law of one layer.

    kind "discrete": ``atoms`` with ``probs``.
    kind "dirichlet": every P and Q entry is eps plus a share of a
    Dirichlet(alpha) split of the remaining row mass 1 - 2 m eps across
    the 3m entries of the row (R has no floor); l = 1.
    kind "lift1d": layers assembled from i.i.d. sites of ``oned``.
    """

    m: int
    epsilon: float
    l: int = 1
    kind: str = "discrete"
    atoms: tuple = ()
    probs: np.ndarray | None = None
    alpha: float = 1.0
    oned: OneDSpec | None = None
    name: str = ""
    _support_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.m < 1:
            raise SpecError("m must be >= 1")
        if not (0 < self.epsilon < 1):
            raise SpecError("epsilon must lie in (0, 1)")
        if self.kind == "discrete":
            if not self.atoms:
                raise SpecError("discrete spec needs at least one atom")
            for t in self.atoms:
                if t.m != self.m:
                    raise SpecError("atom dimension differs from m")
            object.__setattr__(self, "probs", _check_probs(self.probs, len(self.atoms)))
        elif self.kind == "dirichlet":
            if 2 * self.m * self.epsilon >= 1:
                raise SpecError("dirichlet family requires 2 m eps < 1")
            if not self.alpha > 0:
                raise SpecError("alpha must be positive")
            if self.l != 1:
                raise SpecError("dirichlet family uses l = 1")
        elif self.kind == "lift1d":
            if self.oned is None or self.oned.m != self.m:
                raise SpecError("lift1d spec needs a OneDSpec with the same m")
        else:
            raise SpecError(f"unknown spec kind {self.kind!r}")

    @property
    def is_continuous(self) -> bool:
        return self.kind == "dirichlet"

    def support(self) -> list[tuple[Triple, float]]:
        """Finite support as (triple, probability); not available for dirichlet."""
        if self.kind == "discrete":
            return list(zip(self.atoms, map(float, self.probs)))
        if self.kind == "lift1d":
            if "s" not in self._support_cache:
                k = len(self.oned.probs)
                if k ** self.m > 4096:
                    raise SpecError("lifted support too large to enumerate")
                out = []
                for combo in itertools.product(range(k), repeat=self.m):
                    sv = self.oned.vectors[list(combo)][None]
                    P, Q, R = lift_sites(sv, self.m)
                    pr = float(np.prod(self.oned.probs[list(combo)]))
                    if pr > 0:
                        out.append((Triple(P[0], Q[0], R[0]), pr))
                self._support_cache["s"] = out
            return list(self._support_cache["s"])
        raise SpecError("continuous family has no finite support")

    def validate(self) -> list[tuple[int, C2Report]]:
        """C2 reports of failing support atoms (empty list when valid)."""
        if self.kind == "dirichlet":
            return []
        bad = []
        for k, (t, _) in enumerate(self.support()):
            rep = validate_condition_c2(t, self.epsilon, self.l)
            if not rep.ok:
                bad.append((k, rep))
        return bad

    def is_mirror_symmetric(self, tol: float = 0.0) -> bool:
        """True when the law is invariant under P <-> Q."""
        if self.kind == "dirichlet":
            return True
        sup = self.support()
        used = [False] * len(sup)
        for t, p in sup:
            mt = t.mirrored()
            hit = False
            for k, (s, q) in enumerate(sup):
                if used[k] or abs(p - q) > tol:
                    continue
                if (np.max(np.abs(s.P - mt.P)) <= tol and np.max(np.abs(s.Q - mt.Q)) <= tol
                        and np.max(np.abs(s.R - mt.R)) <= tol):
                    used[k] = hit = True
                    break
            if not hit:
                return False
        return True

    # sampling -------------------------------------------------------------
    def layers(self, seed: int, ns: np.ndarray):
        ns = np.asarray(ns, dtype=np.int64)
        m = self.m
        if self.kind == "discrete":
            u = uniforms(derive_key(STREAM_LAYER, seed), ns)
            idx = _pick(u, self.probs)
            stack = lambda name: np.stack([getattr(t, name) for t in self.atoms])
            return stack("P")[idx], stack("Q")[idx], stack("R")[idx]
        if self.kind == "lift1d":
            sites = (ns[:, None] * m + np.arange(1, m + 1)[None, :]).reshape(-1)
            idx = site_atoms(self.oned, seed, sites).reshape(len(ns), m)
            return lift_sites(self.oned.vectors[idx], m)
        # dirichlet with floor
        slots = 3 * m * m
        key = derive_key(STREAM_LAYER, seed)
        cnt = ns[:, None] * slots + np.arange(slots)[None, :]
        u = uniforms(key, cnt).reshape(len(ns), m, 3 * m)
        g = special.gammaincinv(self.alpha, u)
        s = g.sum(axis=2, keepdims=True)
        w = np.where(s > 0, g / np.where(s > 0, s, 1.0), 1.0 / (3 * m))
        free = 1.0 - 2 * m * self.epsilon
        P = self.epsilon + free * w[:, :, :m]
        Q = self.epsilon + free * w[:, :, m: 2 * m]
        R = free * w[:, :, 2 * m:]
        # absorb rounding so each row sums to 1
        R = R + (1.0 - (P + Q + R).sum(axis=2, keepdims=True)) / m
        return P, Q, np.maximum(R, 0.0)


def site_atoms(oned: OneDSpec, seed: int, sites) -> np.ndarray:
    u = uniforms(derive_key(STREAM_SITE, seed), np.asarray(sites, dtype=np.int64))
    return _pick(u, oned.probs)


def lift_1d(spec1d: OneDSpec, epsilon: float | None = None, l: int = 1) -> EnvSpec:
    spec = EnvSpec(m=spec1d.m, epsilon=epsilon if epsilon is not None else 0.5,
                   l=l, kind="lift1d", oned=spec1d)
    if epsilon is None:
        eps = measured_epsilon(spec, l)
        spec = EnvSpec(m=spec1d.m, epsilon=eps, l=l, kind="lift1d", oned=spec1d)
    return spec


def measured_epsilon(spec: EnvSpec, l: int = 1) -> float:
    """Largest eps for which every support atom passes C2 with power l."""
    best = 1.0
    for t, _ in spec.support():
        rep = validate_condition_c2(t, 0.0, l)
        if not rep.r_ok:
            return 0.0
        best = min(best, 1.0 - rep.r_power_norm, rep.p_margin, rep.q_margin)
    return float(max(best, 0.0))


@dataclass(frozen=True, eq=False)
class EnvWindow:
    """Layers a..b (inclusive) of an environment; arrays are read-only."""

    a: int
    b: int
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    spec: EnvSpec | None = None
    seed: int | None = None

    def __post_init__(self):
        n = self.b - self.a + 1
        for name in ("P", "Q", "R"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            if arr.ndim != 3 or arr.shape[0] != n or arr.shape[1] != arr.shape[2]:
                raise SpecError(f"{name} must have shape ({n}, m, m)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return self.P.shape[1]

    @property
    def layers(self) -> np.ndarray:
        return np.arange(self.a, self.b + 1)

    def __len__(self):
        return self.b - self.a + 1

    def idx(self, n: int) -> int:
        if not self.a <= n <= self.b:
            raise IndexError(f"layer {n} outside window [{self.a}, {self.b}]")
        return n - self.a

    def triple(self, n: int) -> Triple:
        k = self.idx(n)
        return Triple(self.P[k], self.Q[k], self.R[k])

    def sub(self, a: int, b: int) -> "EnvWindow":
        i, j = self.idx(a), self.idx(b)
        return EnvWindow(a, b, self.P[i: j + 1], self.Q[i: j + 1], self.R[i: j + 1],
                         self.spec, self.seed)

    def mirrored(self) -> "EnvWindow":
        """Reflect n -> -n: layer -n of the result is layer n with P and Q swapped."""
        return EnvWindow(-self.b, -self.a, self.Q[::-1], self.P[::-1], self.R[::-1],
                         None, None)


def sample_window(spec: EnvSpec, seed: int, a: int, b: int) -> EnvWindow:
    if a > b:
        raise SpecError("need a <= b")
    P, Q, R = spec.layers(seed, np.arange(a, b + 1))
    return EnvWindow(a, b, P, Q, R, spec, seed)


def constant_window(t: Triple, a: int, b: int) -> EnvWindow:
    n = b - a + 1
    rep = lambda x: np.broadcast_to(x, (n,) + x.shape).copy()
    return EnvWindow(a, b, rep(t.P), rep(t.Q), rep(t.R))


def lift_1d_window(site_vectors, m: int, a: int = 0) -> EnvWindow:
    """Window from explicit site vectors p(x, .) for x = a m + 1, a m + 2, ...

    ``site_vectors`` has shape (N m, 2m+1); layers a .. a + N - 1.
    """
    sv = np.asarray(site_vectors, dtype=float)
    if sv.ndim != 2 or sv.shape[1] != 2 * m + 1 or sv.shape[0] % m:
        raise SpecError("site_vectors must have shape (N*m, 2m+1)")
    if np.any(sv < 0) or np.max(np.abs(sv.sum(axis=1) - 1.0)) > STOCH_TOL:
        raise SpecError("malformed site vector")
    n = sv.shape[0] // m
    P, Q, R = lift_sites(sv.reshape(n, m, 2 * m + 1), m)
    return EnvWindow(a, a + n - 1, P, Q, R)


def discrete_spec(atoms: Sequence[Triple], probs, epsilon: float | None = None,
                  l: int = 1, name: str = "") -> EnvSpec:
    atoms = tuple(atoms)
    spec = EnvSpec(m=atoms[0].m, epsilon=epsilon or 0.5, l=l, atoms=atoms,
                   probs=probs, name=name)
    if epsilon is None:
        spec = EnvSpec(m=atoms[0].m, epsilon=max(measured_epsilon(spec, l), 1e-300),
                       l=l, atoms=atoms, probs=probs, name=name)
    return spec


def scalar_triple(p: float, q: float) -> Triple:
    r = 1.0 - p - q
    if abs(r) < 4 * np.finfo(float).eps:
        r = 0.0     # p + q = 1 up to rounding: keep R exactly zero
    return Triple([[p]], [[q]], [[r]])
