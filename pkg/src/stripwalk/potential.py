"""Two-sided potential, its mirror, and the valley around the origin.

Sign conventions: Phi_n - Phi_{n-1} = log ||A_n y_n|| with Phi_0 = 0, so the
walk drifts towards low Phi; the mirror potential satisfies
Phi-_{n+1} - Phi-_n = -log ||A-_n y-_n|| with Phi-_0 = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .envgen import EnvSpec, EnvWindow, sample_window
from .zeta import WindowTooSmallError, burnin_depth, zeta_minus_sequence, zeta_sequence

DEFAULT_DELTA = 0.1
DEFAULT_GAMMA = 0.1
TIE_ATOL = 1e-9
MAX_LAYERS = 2_000_000


@dataclass(frozen=True)
class PotentialProfile:
    a: int
    b: int
    phi: np.ndarray
    phi_minus: np.ndarray
    f: np.ndarray
    f_minus: np.ndarray
    lambda_used: float
    burnin: tuple[int, int] = (0, 0)

    @property
    def layers(self) -> np.ndarray:
        return np.arange(self.a, self.b + 1)

    def idx(self, n: int) -> int:
        if not self.a <= n <= self.b:
            raise IndexError(f"layer {n} outside profile [{self.a}, {self.b}]")
        return n - self.a

    def phi_at(self, n: int) -> float:
        return float(self.phi[self.idx(n)])

    def phi_minus_at(self, n: int) -> float:
        return float(self.phi_minus[self.idx(n)])

    def rows(self):
        """(n, Phi_n, Phi-_n) per layer, for export."""
        return zip(self.layers.tolist(), self.phi.tolist(), self.phi_minus.tolist())


def profile_from_increments(a: int, f: np.ndarray, f_minus: np.ndarray | None = None,
                            lambda_used: float = 0.0) -> PotentialProfile:
    """Anchor cumulative sums of per-layer increments (layers a..a+len(f)-1) at 0."""
    f = np.asarray(f, dtype=float)
    b = a + len(f) - 1
    if not a <= 0 <= b:
        raise ValueError("profile range must contain 0")
    cs = np.cumsum(f)
    phi = cs - cs[-a]
    if f_minus is None:
        phim = np.full_like(phi, np.nan)
        fm = np.full_like(phi, np.nan)
    else:
        fm = np.asarray(f_minus, dtype=float)
        cm = np.concatenate([[0.0], np.cumsum(fm)])   # cm[j - a + 1] = sum_{k=a}^{j}
        # Phi-_n = C(-1) - C(n-1)
        phim = cm[-a] - cm[np.arange(len(f))]
    phi[-a] = 0.0
    phim[-a] = 0.0
    return PotentialProfile(a, b, phi, phim, f, fm, float(lambda_used))


def potential_profile(w: EnvWindow, tol: float = 1e-12, a: int | None = None,
                      b: int | None = None, lambda_used: float = 0.0) -> PotentialProfile:
    """Phi and Phi- on [a, b]; defaults to the widest range the burn-in allows."""
    kl = burnin_depth(w, tol)[0]
    kr = burnin_depth(w, tol, from_right=True)[0]
    a = w.a + 2 * kl if a is None else a
    b = w.b - 2 * kr if b is None else b
    if not a <= 0 <= b:
        raise WindowTooSmallError("profile range must contain 0 with burn-in margins",
                                  max(0, a), max(0, -b))
    zs = zeta_sequence(w, (a, b), tol, burnin=None if w.a < a - kl else kl)
    zm = zeta_minus_sequence(w, (a, b), tol, burnin=None if w.b > b + kr else kr)
    prof = profile_from_increments(a, zs.f, zm.f, lambda_used)
    return PotentialProfile(prof.a, prof.b, prof.phi, prof.phi_minus, prof.f, prof.f_minus,
                            prof.lambda_used, (zs.burnin, zm.burnin))


# ---------------------------------------------------------------------------
# valley search

@njit(cache=True)
def _scan_up(phi, start, step, level, floor):
    """First index beyond start (in direction step) with phi >= level.

    Returns (index, code): code 0 found, 1 rejected (phi < floor first),
    2 window exhausted.
    """
    n = phi.shape[0]
    x = start + step
    while 0 <= x < n:
        if phi[x] < floor:
            return x, 1
        if phi[x] >= level:
            return x, 0
        x += step
    return x, 2


@njit(cache=True)
def _walls(phi, i0, b, D, atol):
    """Smallest (a, c) around 0 for bottom b; code as in _scan_up."""
    lvl = phi[b] + D
    fl = phi[b] - atol
    lo = min(i0, b)
    hi = max(i0, b)
    m_in = phi[lo]
    for x in range(lo, hi + 1):
        if phi[x] < fl:
            return -1, -1, 1
        if phi[x] > m_in:
            m_in = phi[x]
    # the wall on the side of 0 must also top the hill between 0 and b
    left_lvl = lvl
    right_lvl = lvl
    if b > i0:
        left_lvl = max(lvl, m_in)
    elif b < i0:
        right_lvl = max(lvl, m_in)
    # ties within atol count as reaching a level
    a, ca = _scan_up(phi, lo, -1, left_lvl - atol, fl)
    if ca != 0:
        return -1, -1, ca
    c, cc = _scan_up(phi, hi, 1, right_lvl - atol, fl)
    if cc != 0:
        return -1, -1, cc
    return a, c, 0


@njit(cache=True)
def _valley_kernel(phi, i0, D, atol):
    """Smallest valley of depth >= D whose interior contains index i0.

    Candidate bottoms are running-minimum records from i0 in each direction,
    up to the first rise of D above the running minimum. Returns
    (status, b, a, c) with status 0 found, 1 window exhausted, 2 none.
    """
    n = phi.shape[0]
    cands = np.empty(n, dtype=np.int64)
    nc = 0
    cands[nc] = i0
    nc += 1
    exhausted = False
    for step in (1, -1):
        runmin = phi[i0]
        x = i0 + step
        closed = False
        while 0 <= x < n:
            v = phi[x]
            if v <= runmin + atol:
                cands[nc] = x
                nc += 1
            if v < runmin:
                runmin = v
            if v >= runmin + D + atol:
                closed = True
                break
            x += step
        if not closed:
            exhausted = True
    best = -1
    best_a = -1
    best_c = -1
    undetermined = False
    for k in range(nc):
        bb = cands[k]
        aa, cc, code = _walls(phi, i0, bb, D, atol)
        if code == 1:
            continue
        if code == 2:
            undetermined = True
            continue
        if best < 0:
            take = True
        else:
            w_new = cc - aa
            w_old = best_c - best_a
            if w_new != w_old:
                take = w_new < w_old
            elif abs(bb - i0) != abs(best - i0):
                take = abs(bb - i0) < abs(best - i0)
            else:
                take = bb < best
        if take:
            best, best_a, best_c = bb, aa, cc
    if best >= 0:
        return 0, best, best_a, best_c
    if exhausted or undetermined:
        return 1, -1, -1, -1
    return 2, -1, -1, -1


@njit(cache=True)
def _max_drawdown(phi, lo, hi):
    """max over lo <= s < s' <= hi of phi[s] - phi[s']."""
    best = 0.0
    peak = phi[lo]
    for x in range(lo + 1, hi + 1):
        if peak - phi[x] > best:
            best = peak - phi[x]
        if phi[x] > peak:
            peak = phi[x]
    return best


@njit(cache=True)
def _max_rise(phi, lo, hi):
    """max over lo <= s' < s <= hi of phi[s] - phi[s']."""
    best = 0.0
    trough = phi[lo]
    for x in range(lo + 1, hi + 1):
        if phi[x] - trough > best:
            best = phi[x] - trough
        if phi[x] < trough:
            trough = phi[x]
    return best


@dataclass(frozen=True)
class Valley:
    t: float
    a_t: int
    b_t: int
    c_t: int
    a: int
    c: int
    delta: float
    gamma: float
    depth_log_t: float
    phi_b: float
    certificate: dict
    margins: dict = field(default_factory=dict)
    sigma2: float | None = None

    found = True

    @property
    def passed(self) -> bool:
        """est1..est5 hold (est6 is a consequence of the exact-depth picture
        and is reported but not required)."""
        return all(v for k, v in self.certificate.items() if v is not None and k != "est6")

    @property
    def window_gamma(self) -> tuple[float, float]:
        L = math.log(self.t) ** 2
        return self.b_t - self.gamma * L, self.b_t + self.gamma * L


@dataclass(frozen=True)
class NoValley:
    t: float
    reason: str          # "exhausted" or "no-depth"
    depth_log_t: float
    range: tuple[int, int]

    found = False
    passed = False


def _certify(phi, i0, a_t, b, c_t, t, delta, gamma, sigma2, a_layer):
    D = math.log(t)
    L = D * D
    pb = float(phi[b])
    cert, marg = {}, {}
    lay = lambda i: i + a_layer
    if sigma2 is not None and sigma2 > 0:
        bound = L / (sigma2 * delta)
        cert["est1"] = bool(lay(c_t) <= bound and lay(a_t) >= -bound)
        marg["est1"] = (float(max(lay(c_t), -lay(a_t))), float(bound))
    else:
        cert["est1"] = None
        marg["est1"] = (float(max(lay(c_t), -lay(a_t))), None)
    dd = float(_max_drawdown(phi, b, c_t))
    cert["est2"] = bool(dd <= (1 - delta) * D)
    marg["est2"] = (dd, (1 - delta) * D)
    rr = float(_max_rise(phi, a_t, b))
    cert["est3"] = bool(rr <= (1 - delta) * D)
    marg["est3"] = (rr, (1 - delta) * D)
    lo = b - gamma * L
    hi = b + gamma * L
    idx = np.arange(a_t, c_t + 1)
    out = (idx < lo) | (idx > hi)
    m4 = float(phi[a_t: c_t + 1][out].min() - pb) if out.any() else math.inf
    cert["est4"] = bool(m4 >= delta * D)
    marg["est4"] = (m4, delta * D)
    m5 = float(min(phi[a_t], phi[c_t]) - pb)
    cert["est5"] = bool(m5 >= (1 + delta) * D)
    marg["est5"] = (m5, (1 + delta) * D)
    lo6, hi6 = min(i0, b), max(i0, b)
    m6 = float(phi[lo6: hi6 + 1].max() - pb)
    cert["est6"] = bool(m6 <= D)
    marg["est6"] = (m6, D)
    return cert, marg


def find_valley(prof: PotentialProfile | np.ndarray, t: float, delta: float = DEFAULT_DELTA,
                gamma: float = DEFAULT_GAMMA, sigma2: float | None = None,
                atol: float = TIE_ATOL, a: int | None = None) -> Valley | NoValley:
    """Valley of depth log t around layer 0, in raw potential units.

    (a, b, c) is the smallest triple with a < 0 < c, phi(b) = min phi on
    [a, c], phi(a) = max on [a, b], phi(c) = max on [b, c] and both walls at
    least log t above phi(b). a_t, c_t are the first points beyond a and c
    rising a further delta log t above the wall. ``prof`` may be a bare array when its first layer ``a`` is given.
    """
    if isinstance(prof, PotentialProfile):
        phi, a_layer = np.ascontiguousarray(prof.phi), prof.a
    else:
        phi, a_layer = np.ascontiguousarray(prof, dtype=float), int(a)
    if t <= 1:
        raise ValueError("t must exceed 1")
    rng = (a_layer, a_layer + len(phi) - 1)
    i0 = -a_layer
    if not 0 <= i0 < len(phi):
        raise ValueError("profile must contain layer 0")
    D = math.log(t)
    status, b, aa, cc = _valley_kernel(phi, i0, D, atol)
    if status != 0:
        return NoValley(t, "exhausted" if status == 1 else "no-depth", D, rng)
    a_t, s1 = _scan_up(phi, aa, -1, phi[aa] + delta * D - atol, -np.inf)
    c_t, s2 = _scan_up(phi, cc, 1, phi[cc] + delta * D - atol, -np.inf)
    if s1 or s2:
        return NoValley(t, "exhausted", D, rng)
    cert, marg = _certify(phi, i0, a_t, b, c_t, t, delta, gamma, sigma2, a_layer)
    return Valley(t, a_t + a_layer, b + a_layer, c_t + a_layer, aa + a_layer, cc + a_layer,
                  delta, gamma, D, float(phi[b]), cert, marg, sigma2)


def verify_valley(v: Valley, phi: np.ndarray, a_layer: int) -> dict:
    """Re-evaluate every recorded inequality directly from phi."""
    i0 = -a_layer
    cert, _ = _certify(np.asarray(phi, dtype=float), i0, v.a_t - a_layer, v.b_t - a_layer,
                       v.c_t - a_layer, v.t, v.delta, v.gamma, v.sigma2, a_layer)
    return cert


def sigma2_from_increments(f: np.ndarray, n_batches: int = 50) -> float:
    f = np.asarray(f, dtype=float)
    L = max(1, len(f) // n_batches)
    nb = len(f) // L
    if nb < 2:
        return float("nan")
    sums = f[: nb * L].reshape(nb, L).sum(axis=1)
    return float(sums.var(ddof=1) / L)


def predict_b_t(spec: EnvSpec, seed: int, t: float, delta: float = DEFAULT_DELTA,
                gamma: float = DEFAULT_GAMMA, sigma2: float | None = None,
                tol: float = 1e-12, max_layers: int = MAX_LAYERS,
                initial_halfwidth: int | None = None, return_profile: bool = False):
    """Grow a symmetric window around 0 until the valley of depth log t closes.

    Returns (valley or NoValley, (a, b)) and the profile when asked.
    """
    L = math.log(t) ** 2
    H = initial_halfwidth or max(16, int(math.ceil(2 * L)))
    margin = 64
    cap = max(1, (max_layers - 1) // 2)
    while True:
        H = min(H, cap)
        w = sample_window(spec, seed, -H - margin, H + margin)
        try:
            prof = potential_profile(w, tol, a=-H, b=H)
        except WindowTooSmallError as exc:
            margin = 2 * max(margin, exc.needed_left, exc.needed_right) + 16
            continue
        s2 = sigma2 if sigma2 is not None else sigma2_from_increments(prof.f)
        v = find_valley(prof, t, delta, gamma, sigma2=s2)
        if v.found or H >= cap:
            out = (v, (prof.a, prof.b))
            return out + (prof,) if return_profile else out
        H *= 2
