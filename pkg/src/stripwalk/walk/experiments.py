"""Sinai localisation and martingale CLT experiments."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .._rng import derive_key, env_seed
from ..envgen import JAL_TOL, EnvSpec, OneDSpec, SpecError, lift_1d, sample_window
from ..potential import Valley, find_valley, potential_profile, predict_b_t
from ..zeta import WindowTooSmallError
from .chain import OK, _Prepared, reflected_window, simulate_1d, simulate_batch
from .solvers import stationary_log_mass

# below these the valley picture is not expected to hold at all
MIN_LOG2_T = 100.0
MIN_PASS_RATE = 0.2
STREAM_ANNEALED = 11


@dataclass(frozen=True)
class SinaiRecord:
    env_seed: int
    t: int
    walk_id: int
    layer: int
    lane: int
    b_t: int
    in_gamma: bool
    in_valley: bool


@dataclass
class SinaiEnvRow:
    env_index: int
    env_seed: int
    t: int
    found: bool
    reason: str
    a_t: int | None = None
    b_t: int | None = None
    c_t: int | None = None
    passed: bool = False
    certificate: dict = field(default_factory=dict)
    oracle_b_t: int | None = None
    in_gamma: int = 0
    in_valley: int = 0
    n_walks: int = 0


@dataclass
class SinaiSummary:
    t: int
    n_envs: int
    n_walks: int
    no_valley: int
    pass_rate: float
    too_small_t: bool
    frac_gamma: float | None
    frac_valley: float | None
    frac_gamma_certified: float | None
    oracle_agree: bool | None
    counts: dict


@dataclass
class SinaiResult:
    records: list
    envs: list
    summary: list


def scalar_potential(spec: EnvSpec, seed: int, a: int, b: int) -> np.ndarray:
    """Phi on layers a..b for m = 1 straight from log(q/p); Phi_0 = 0."""
    if spec.m != 1:
        raise ValueError("scalar potential needs m = 1")
    w = sample_window(spec, seed, a, b)
    f = np.log(w.Q[:, 0, 0] / w.P[:, 0, 0])
    cs = np.cumsum(f)
    return cs - cs[-a]


def potential_gap(spec: EnvSpec, seed: int, halfwidths, tol: float = 1e-12) -> dict:
    """max_{k,l} |log(pi(k).1 / pi(l).1) + (Phi_k - Phi_l)| on [-N, N] per N.

    All windows are cut from one environment; pi is exact for the chain
    reflected at -N and N, Phi is the two-sided potential anchored at 0.
    Since the walk drifts towards low Phi, log pi(k).1 + Phi_k should stay
    within a bounded band however long the window.
    """
    H = max(int(n) for n in halfwidths)
    margin = 256
    while True:
        w = sample_window(spec, seed, -H - margin, H + margin)
        try:
            prof = potential_profile(w, tol, a=-H, b=H)
            break
        except WindowTooSmallError as exc:
            margin = 2 * max(margin, exc.needed_left, exc.needed_right) + 16
    out = {}
    for n in halfwidths:
        n = int(n)
        logs, shape = stationary_log_mass(reflected_window(w, -n, n))
        g = logs + np.log(shape.sum(axis=1)) + prof.phi[prof.idx(-n): prof.idx(n) + 1]
        out[n] = float(g.max() - g.min())
    return out


def _run_env(spec, k, es, ts, n_walks, delta, gamma, tol):
    rows, recs = [], []
    m = spec.m
    for ti, t in enumerate(ts):
        v, (pa, pb) = predict_b_t(spec, es, t, delta, gamma, tol=tol)
        if not isinstance(v, Valley):
            rows.append(SinaiEnvRow(k, es, t, False, v.reason))
            continue
        row = SinaiEnvRow(k, es, t, True, "", v.a_t, v.b_t, v.c_t, v.passed,
                          dict(v.certificate), n_walks=n_walks)
        if m == 1:
            phi = scalar_potential(spec, es, pa, pb)
            ov = find_valley(phi, t, delta, gamma, a=pa)
            row.oracle_b_t = ov.b_t if isinstance(ov, Valley) else None
        L = math.log(t) ** 2
        lo, hi = v.a_t - int(L), v.c_t + int(L)
        ids = np.arange(n_walks) + ti * n_walks
        lanes = (np.arange(n_walks) % m) + 1
        todo = np.arange(n_walks)
        layer = np.zeros(n_walks, dtype=np.int64)
        lane = np.zeros(n_walks, dtype=np.int64)
        while len(todo):
            pw = _Prepared(sample_window(spec, es, lo, hi))
            r = simulate_batch(pw, 0, lanes[todo], t, es, ids[todo])
            ok = r["status"] == OK
            layer[todo[ok]] = r["layer"][ok]
            lane[todo[ok]] = r["lane"][ok]
            todo = todo[~ok]
            span = hi - lo
            lo, hi = lo - span, hi + span
        g_lo, g_hi = v.window_gamma
        for j in range(n_walks):
            ig = bool(g_lo <= layer[j] <= g_hi)
            iv = bool(v.a_t <= layer[j] <= v.c_t)
            row.in_gamma += ig
            row.in_valley += iv
            recs.append(SinaiRecord(es, t, int(ids[j]), int(layer[j]), int(lane[j]), v.b_t, ig, iv))
        rows.append(row)
    return rows, recs


def sinai_experiment(spec: EnvSpec, ts, n_envs: int, n_walks: int, delta: float = 0.1,
                     gamma: float = 0.3, seed: int = 0, workers: int = 1,
                     tol: float = 1e-12) -> SinaiResult:
    """Coverage of the predicted valley by quenched walks started at layer 0.

    Environment k uses ``env_seed(seed, k)``; walk j at the i-th time uses
    walk id i * n_walks + j and starts in lane (j mod m) + 1. A time is
    flagged too small when log^2 t < 100 or fewer than a fifth of the valleys
    pass their certificate; flagged times carry no coverage fractions.
    """
    ts = [int(t) for t in ts]
    seeds = [env_seed(seed, k) for k in range(n_envs)]
    jobs = [(spec, k, s, ts, n_walks, delta, gamma, tol) for k, s in enumerate(seeds)]
    if workers <= 1:
        out = [_run_env(*j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(lambda j: _run_env(*j), jobs))
    envs = [r for rows, _ in out for r in rows]
    records = [r for _, recs in out for r in recs]
    summary = []
    for t in ts:
        rows = [r for r in envs if r.t == t]
        found = [r for r in rows if r.found]
        nw = sum(r.n_walks for r in found)
        ig = sum(r.in_gamma for r in found)
        iv = sum(r.in_valley for r in found)
        cert = [r for r in found if r.passed]
        nwc = sum(r.n_walks for r in cert)
        igc = sum(r.in_gamma for r in cert)
        pr = sum(r.passed for r in found) / len(rows) if rows else 0.0
        small = math.log(t) ** 2 < MIN_LOG2_T or pr < MIN_PASS_RATE
        agree = None
        if spec.m == 1 and found:
            agree = all(r.oracle_b_t == r.b_t for r in found)
        summary.append(SinaiSummary(
            t, len(rows), nw, len(rows) - len(found), pr, small,
            None if small or nw == 0 else ig / nw,
            None if small or nw == 0 else iv / nw,
            None if small or nwc == 0 else igc / nwc,
            agree, {"walks": nw, "in_gamma": ig, "in_valley": iv,
                    "certified_walks": nwc, "certified_in_gamma": igc}))
    return SinaiResult(records, envs, summary)


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CLTReport:
    t: int
    n_walks: int
    mode: str
    env_seed: int | None
    ks: float
    ks_pvalue: float
    sigma2_hat: float
    sigma2_atoms: tuple        # sum_j j^2 p(j) per support atom
    var_ratio: float | None    # sigma2_hat / sigma2_atoms[0] for single-atom specs
    cond_var_range: tuple
    cond_var_ok: bool
    mean: float


def check_zero_drift(oned: OneDSpec, tol: float = JAL_TOL):
    d = oned.drifts()
    if np.any(np.abs(d) > tol):
        k = int(np.argmax(np.abs(d)))
        raise SpecError(f"support vector {k} has drift {d[k]:.3g}; the CLT needs zero drift")


def clt_experiment(oned: OneDSpec, t: int, n_walks: int, seed: int = 0, mode: str = "quenched",
                   env: int | None = None, epsilon: float | None = None,
                   workers: int = 1) -> CLTReport:
    """Normality of xi(t) / (sigma_hat sqrt t) for the zero-drift 1D walk from site 1.

    ``mode="quenched"`` runs all walks in environment ``env`` (default
    ``env_seed(seed, 0)``); ``"annealed"`` gives walk j its own environment.
    sigma_hat^2 = Var(xi(t)) / t. The conditional step variances of the
    support atoms are checked against [epsilon, m^2].
    """
    check_zero_drift(oned)
    ids = np.arange(n_walks)
    if mode == "quenched":
        es = env_seed(seed, 0) if env is None else int(env)
        envs = es
    elif mode == "annealed":
        es = None
        envs = np.array([derive_key(STREAM_ANNEALED, seed, j) & 0x7FFFFFFFFFFFFFFF
                         for j in ids], dtype=np.int64)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    x = simulate_1d(oned, envs, 1, t, seed, ids, workers=workers) - 1
    s2 = float(np.var(x) / t)
    z = x / math.sqrt(s2 * t) if s2 > 0 else np.zeros(len(x))
    ks = stats.kstest(z, "norm")
    sv = oned.step_variances()
    eps = epsilon if epsilon is not None else lift_1d(oned).epsilon
    ok = bool(np.all(sv >= eps - 1e-12) and np.all(sv <= oned.m ** 2 + 1e-12))
    ratio = s2 / float(sv[0]) if len(sv) == 1 else None
    return CLTReport(t, n_walks, mode, es, float(ks.statistic), float(ks.pvalue), s2,
                     tuple(float(v) for v in sv), ratio, (float(sv.min()), float(sv.max())),
                     ok, float(np.mean(x)))
