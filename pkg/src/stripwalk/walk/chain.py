"""Quenched simulation of the walk on the strip.

Each row of a layer is sampled by inverse CDF on a single uniform with the
targets ordered P-block, R-block, Q-block, each in lane order. Walk w uses
the uniform stream ``uniforms(walk_key(seed, w), step)``, so a path depends
only on (environment, seed, walk id).

Lanes are 1-based in every public signature (``WalkState``, the lane
arrays of ``simulate_batch``); the kernels work with 0-based lanes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .._rng import nb_uniform, walk_key, walk_keys
from ..envgen import EnvWindow

OK, EXHAUSTED = 0, 1


class WindowExhaustedError(RuntimeError):
    """The walk left the layers covered by the window."""


@dataclass(frozen=True)
class WalkState:
    layer: int
    lane: int = 1

    def __post_init__(self):
        if self.lane < 1:
            raise ValueError("lanes are numbered from 1")


@dataclass(frozen=True)
class WalkSummary:
    endpoint: WalkState
    max_layer: int
    min_layer: int
    steps: int
    occupation: np.ndarray | None = None


def reflected_window(w: EnvWindow, a: int, b: int) -> EnvWindow:
    """Layers a..b of w with (P, Q, R) replaced by (I, 0, 0) at a and (0, I, 0) at b."""
    if b - a < 1:
        raise ValueError("need a < b")
    sub = w.sub(a, b)
    P, Q, R = sub.P.copy(), sub.Q.copy(), sub.R.copy()
    m = w.m
    eye, zero = np.eye(m), np.zeros((m, m))
    P[0], Q[0], R[0] = eye, zero, zero
    P[-1], Q[-1], R[-1] = zero, eye, zero
    return EnvWindow(a, b, P, Q, R, None, None)


def build_cdf(w: EnvWindow) -> np.ndarray:
    """Flat CDF table, entry ((layer - a) m + lane) 3m + k.

    From the last positive-probability target on the CDF is set to exactly
    1, so the inverse search can never return a zero-probability target.
    """
    m = w.m
    rows = np.concatenate([w.P, w.R, w.Q], axis=2)        # (N, m, 3m)
    cdf = np.cumsum(rows, axis=2)
    pos = rows > 0
    last = 3 * m - 1 - np.argmax(pos[:, :, ::-1], axis=2)  # index of last positive
    k = np.arange(3 * m)[None, None, :]
    cdf = np.where(k >= last[:, :, None], 1.0, cdf)
    return np.ascontiguousarray(cdf.reshape(-1))


def target_tables(m: int):
    k = np.arange(3 * m)
    dl = np.array([1, 0, -1], dtype=np.int64)[k // m]
    dn = (k % m).astype(np.int64)
    return dl, dn


@njit(cache=True, inline="always")
def _pick(cdf, off, K, u):
    j = 0
    for k in range(K - 1):
        j += u >= cdf[off + k]
    return j


@njit(cache=True, nogil=True)
def run_walks(cdf, m, base, nl, dl, dn, layer, lane, keys, t, lo, hi, status, steps):
    """Advance every walk t steps in lockstep; walks are updated in place.

    A walk that needs a layer outside [base, base + nl) stops with status 1
    and records the number of completed steps.
    """
    K = 3 * m
    W = layer.shape[0]
    for s in range(t):
        for q in range(W):
            if status[q] != 0:
                continue
            L = layer[q]
            idx = L - base
            if idx < 0 or idx >= nl:
                status[q] = 1
                steps[q] = s
                continue
            u = nb_uniform(keys[q], s)
            j = _pick(cdf, (idx * m + lane[q]) * K, K, u)
            L += dl[j]
            layer[q] = L
            lane[q] = dn[j]
            if L < lo[q]:
                lo[q] = L
            if L > hi[q]:
                hi[q] = L
    for q in range(W):
        if status[q] == 0:
            steps[q] = t


@njit(cache=True, nogil=True)
def run_occupation(cdf, m, base, nl, dl, dn, layer0, lane0, key, t, counts):
    """Single walk with occupation counts per (layer, lane) after each step."""
    K = 3 * m
    L = layer0
    i = lane0
    for s in range(t):
        idx = L - base
        if idx < 0 or idx >= nl:
            return s, L, i
        u = nb_uniform(key, s)
        j = _pick(cdf, (idx * m + i) * K, K, u)
        L += dl[j]
        i = dn[j]
        idx = L - base
        if 0 <= idx < nl:
            counts[idx * m + i] += 1
    return t, L, i


@njit(cache=True, nogil=True)
def run_first_passage(cdf, m, base, nl, dl, dn, a, b, layer0, lane0, keys, max_steps,
                      hit_b, times, status):
    """Run each walk until it reaches layer a or layer b (or max_steps)."""
    K = 3 * m
    for q in range(keys.shape[0]):
        L = layer0[q]
        i = lane0[q]
        s = 0
        status[q] = 0
        while a < L < b:
            if s >= max_steps:
                status[q] = 2
                break
            idx = L - base
            if idx < 0 or idx >= nl:
                status[q] = 1
                break
            u = nb_uniform(keys[q], s)
            j = _pick(cdf, (idx * m + i) * K, K, u)
            L += dl[j]
            i = dn[j]
            s += 1
        hit_b[q] = L >= b
        times[q] = s


def step(w: EnvWindow, s: WalkState, u: float) -> WalkState:
    """One transition from s driven by the uniform draw u."""
    if not w.a <= s.layer <= w.b:
        raise WindowExhaustedError(f"layer {s.layer} outside window [{w.a}, {w.b}]")
    m = w.m
    if s.lane > m:
        raise ValueError(f"lane {s.lane} outside 1..{m}")
    k = w.idx(s.layer)
    i = s.lane - 1
    row = np.concatenate([w.P[k, i], w.R[k, i], w.Q[k, i]])
    cdf = np.cumsum(row)
    pos = np.nonzero(row > 0)[0]
    cdf[pos[-1]:] = 1.0
    j = int(np.sum(u >= cdf[:-1]))
    dl, dn = target_tables(m)
    return WalkState(s.layer + int(dl[j]), int(dn[j]) + 1)


class _Prepared:
    def __init__(self, w: EnvWindow):
        self.w = w
        self.cdf = build_cdf(w)
        self.dl, self.dn = target_tables(w.m)


def _prepared(w):
    return w if isinstance(w, _Prepared) else _Prepared(w)


def simulate(w: EnvWindow, z0: WalkState, t: int, seed: int, walk_id: int = 0,
             occupation: bool = False) -> WalkSummary:
    """Exactly t steps from z0; raises WindowExhaustedError if the walk leaves w."""
    if t < 0:
        raise ValueError("t must be >= 0")
    pw = _prepared(w)
    w = pw.w
    key = np.uint64(walk_key(seed, walk_id))
    if occupation:
        counts = np.zeros(len(w) * w.m, dtype=np.int64)
        done, L, i = run_occupation(pw.cdf, w.m, w.a, len(w), pw.dl, pw.dn, z0.layer,
                                    z0.lane - 1, key, t, counts)
        if done < t:
            raise WindowExhaustedError(f"walk left the window after {done} steps")
        occ = counts.reshape(len(w), w.m)
        # min/max from the histogram plus the start
        visited = np.nonzero(occ.sum(axis=1))[0]
        lo = min(z0.layer, w.a + int(visited.min())) if len(visited) else z0.layer
        hi = max(z0.layer, w.a + int(visited.max())) if len(visited) else z0.layer
        return WalkSummary(WalkState(int(L), int(i) + 1), hi, lo, t, occ)
    res = simulate_batch(pw, np.array([z0.layer]), np.array([z0.lane]), t, seed,
                         np.array([walk_id]))
    if res["status"][0] != OK:
        raise WindowExhaustedError(f"walk left the window after {res['steps'][0]} steps")
    return WalkSummary(WalkState(int(res["layer"][0]), int(res["lane"][0])),
                       int(res["max_layer"][0]), int(res["min_layer"][0]), t)


def simulate_batch(w, layer0, lane0, t: int, seed: int, walk_ids, workers: int = 1,
                   chunk: int = 32) -> dict:
    """Many walks on one window; results do not depend on ``workers``."""
    pw = _prepared(w)
    w = pw.w
    walk_ids = np.asarray(walk_ids, dtype=np.int64)
    n = len(walk_ids)
    layer = np.array(np.broadcast_to(layer0, n), dtype=np.int64)
    lane = np.array(np.broadcast_to(lane0, n), dtype=np.int64) - 1
    if np.any(lane < 0) or np.any(lane >= w.m):
        raise ValueError("lanes must lie in 1..m")
    keys = walk_keys(seed, walk_ids)
    lo = layer.copy()
    hi = layer.copy()
    status = np.zeros(n, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)

    def job(sl):
        run_walks(pw.cdf, w.m, w.a, len(w), pw.dl, pw.dn, layer[sl], lane[sl], keys[sl],
                  t, lo[sl], hi[sl], status[sl], steps[sl])

    slices = [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]
    if workers <= 1 or len(slices) == 1:
        for sl in slices:
            job(sl)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(job, slices))
    return {"layer": layer, "lane": lane + 1, "min_layer": lo, "max_layer": hi,
            "status": status, "steps": steps, "walk_id": walk_ids}


def first_passage(w, a: int, b: int, layer0, lane0, seed: int, walk_ids,
                  max_steps: int = 10**9) -> dict:
    """Run walks from the given starts until they hit layer a or layer b."""
    pw = _prepared(w)
    w = pw.w
    walk_ids = np.asarray(walk_ids, dtype=np.int64)
    n = len(walk_ids)
    keys = walk_keys(seed, walk_ids)
    hit_b = np.zeros(n, dtype=np.bool_)
    times = np.zeros(n, dtype=np.int64)
    status = np.zeros(n, dtype=np.int64)
    run_first_passage(pw.cdf, w.m, w.a, len(w), pw.dl, pw.dn, a, b,
                      np.array(np.broadcast_to(layer0, n), dtype=np.int64),
                      np.array(np.broadcast_to(lane0, n), dtype=np.int64) - 1,
                      keys, max_steps, hit_b, times, status)
    return {"hit_b": hit_b, "time": times, "status": status}


# ---------------------------------------------------------------------------
# one-dimensional walk with sites generated on the fly

def oned_tables(oned):
    """Per-residue jump tables in the order of the lifted strip row.

    For site x with residue r = (x - 1) mod m (lane r), the 3m slots are the
    P-, R- and Q-block offsets of that lane; slots whose offset falls outside
    [-m, m] carry probability 0. Returns (offsets (m, 3m), cdf (K, m, 3m)).
    """
    m = oned.m
    offs = np.empty((m, 3 * m), dtype=np.int64)
    for r in range(m):
        i = r + 1
        j = np.arange(1, m + 1)
        offs[r] = np.concatenate([m + j - i, j - i, -m + j - i])
    valid = (offs >= -m) & (offs <= m)
    probs = np.where(valid[None], oned.vectors[:, np.clip(offs + m, 0, 2 * m)], 0.0)
    cdf = np.cumsum(probs, axis=2)
    pos = probs > 0
    last = 3 * m - 1 - np.argmax(pos[:, :, ::-1], axis=2)
    k = np.arange(3 * m)[None, None, :]
    cdf = np.where(k >= last[:, :, None], 1.0, cdf)
    return np.where(valid, offs, 0), np.ascontiguousarray(cdf)


@njit(cache=True, nogil=True)
def run_walks_1d(site_keys, atom_cdf, offs, cdf, m, x0, keys, t, out):
    """1D walks from site x0; walk q reads its site atoms from ``site_keys[q]``."""
    K = 3 * m
    na = atom_cdf.shape[0]
    for q in range(keys.shape[0]):
        x = x0
        site_key = site_keys[q]
        for s in range(t):
            ua = nb_uniform(site_key, x)
            a = 0
            for k in range(na - 1):
                a += ua >= atom_cdf[k]
            r = (x - 1) % m
            u = nb_uniform(keys[q], s)
            j = 0
            for k in range(K - 1):
                j += u >= cdf[a, r, k]
            x += offs[r, j]
        out[q] = x


def simulate_1d(oned, env_seed, x0: int, t: int, seed: int, walk_ids,
                workers: int = 1, chunk: int = 64) -> np.ndarray:
    """Endpoints of 1D walks in the environment ``site_atoms(oned, env_seed, .)``.

    ``env_seed`` may be an array with one environment per walk (annealed runs).
    """
    from .._rng import STREAM_SITE, derive_key
    offs, cdf = oned_tables(oned)
    atom_cdf = np.cumsum(oned.probs)
    atom_cdf[-1] = 1.0
    walk_ids = np.asarray(walk_ids, dtype=np.int64)
    env = np.broadcast_to(np.asarray(env_seed, dtype=np.int64), walk_ids.shape)
    site_keys = np.array([derive_key(STREAM_SITE, int(e)) for e in env], dtype=np.uint64)
    keys = walk_keys(seed, walk_ids)
    out = np.zeros(len(keys), dtype=np.int64)

    def job(sl):
        run_walks_1d(site_keys[sl], atom_cdf, offs, cdf, oned.m, x0, keys[sl], t, out[sl])

    slices = [slice(i, min(i + chunk, len(keys))) for i in range(0, len(keys), chunk)]
    if workers <= 1 or len(slices) <= 1:
        for sl in slices:
            job(sl)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(job, slices))
    return out
