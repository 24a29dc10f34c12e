"""Lyapunov exponent, centred log-norm series, variance and regime."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .envgen import EnvSpec, EnvWindow, in_jal, sample_window
from .matops import log_norm_product
from .zeta import PsiState, ZetaSeq, sweep

CHUNK = 1 << 16
REGIMES = ("recurrent_candidate", "transient_right", "transient_left", "inconclusive")


@dataclass(frozen=True)
class LyapEstimate:
    lambda_hat: float
    std_error: float
    n_steps: int
    method: str = "batch-mean"
    n_batches: int = 0
    analytic_zero: str | None = None

    def __post_init__(self):
        if self.std_error < 0 or self.n_steps < 1:
            raise ValueError("invalid estimate")


def analytic_zero_reason(spec: EnvSpec, tol: float = 1e-12) -> str | None:
    """Name of an exact argument giving lambda = 0, if one applies.

    scalar: m = 1 and E log(q/p) = 0; mirror: the law is invariant under
    P <-> Q; constant-jal: a single atom on the algebraic surface;
    zero-drift-1d: a lifted 1D law all of whose site vectors have zero drift.
    """
    if spec.kind == "dirichlet":
        return "mirror"
    if spec.kind == "lift1d":
        if np.all(np.abs(spec.oned.drifts()) <= tol):
            return "zero-drift-1d"
    sup = spec.support()
    if spec.m == 1:
        e = math.fsum(p * math.log(t.Q[0, 0] / t.P[0, 0]) for t, p in sup)
        if abs(e) <= tol:
            return "scalar"
    if spec.is_mirror_symmetric():
        return "mirror"
    if len(sup) == 1 or all(np.array_equal(t.P, sup[0][0].P) and np.array_equal(t.Q, sup[0][0].Q)
                            and np.array_equal(t.R, sup[0][0].R) for t, _ in sup):
        if in_jal(sup[0][0]):
            return "constant-jal"
    return None


def _batch_se(f: np.ndarray, n_batches: int) -> tuple[float, int]:
    n = len(f)
    nb = max(2, min(n_batches, n // 2))
    L = n // nb
    if L < 1:
        return float("nan"), 0
    bm = f[: nb * L].reshape(nb, L).mean(axis=1)
    return float(bm.std(ddof=1) / math.sqrt(nb)), nb


def increments(spec: EnvSpec, seed: int, a: int, n: int, burnin: int,
               chunk: int = CHUNK) -> np.ndarray:
    """f_k = log ||B_k x_k|| for layers a..a+n-1, psi started at a - burnin."""
    m = spec.m
    state = PsiState.identity(m)
    out = np.empty(n)
    lo = a - burnin
    if burnin > 0:
        pre = sample_window(spec, seed, lo, a - 1)
        state = sweep(pre.P, pre.Q, pre.R, state, store=False).final
    pos = 0
    while pos < n:
        k = min(chunk, n - pos)
        w = sample_window(spec, seed, a + pos, a + pos + k - 1)
        r = sweep(w.P, w.Q, w.R, state, store=False)
        out[pos: pos + k] = r.f
        state = r.final
        pos += k
    return out


def lyapunov_estimate(spec: EnvSpec, n: int, seed: int = 0, burnin: int = 1000,
                      n_batches: int = 100) -> LyapEstimate:
    """(1/n) sum log ||A_k y_k|| over layers 1..n after ``burnin`` layers."""
    if n < 1:
        raise ValueError("n must be >= 1")
    f = increments(spec, seed, 1, n, burnin)
    lam = float(math.fsum(f) / n)
    se, nb = _batch_se(f, n_batches) if n >= 4 else (0.0, 0)
    if np.ptp(f) == 0.0:
        se = 0.0
    return LyapEstimate(lam, float(se), n, "batch-mean", nb, analytic_zero_reason(spec))


def classify_regime(est: LyapEstimate, z: float = 3.0, analytic_zero: bool | None = None) -> str:
    """lambda < 0 means the walk escapes to +infinity."""
    if est.lambda_hat + z * est.std_error < 0:
        return "transient_right"
    if est.lambda_hat - z * est.std_error > 0:
        return "transient_left"
    certified = analytic_zero if analytic_zero is not None else est.analytic_zero is not None
    return "recurrent_candidate" if certified else "inconclusive"


@dataclass(frozen=True)
class CenteredSeries:
    values: np.ndarray          # S_1..S_n
    increments: np.ndarray      # f_k - lambda
    lambda_used: float
    start_state: dict = field(default_factory=dict)


def centered_series(w: EnvWindow, zseq: ZetaSeq, lam: float) -> CenteredSeries:
    """S_k = log ||A_{a+k-1} ... A_a y_a|| - k lambda over the layers of zseq."""
    w.idx(zseq.a)
    w.idx(zseq.b)
    n = zseq.b - zseq.a + 1
    f = np.empty(n)
    y = zseq.y[0]
    for k in range(n):
        lg, y = log_norm_product((zseq.A[k],), y)
        f[k] = lg
    inc = f - lam
    return CenteredSeries(np.cumsum(inc), inc, float(lam),
                          {"kind": "zeta", "a": zseq.a, "burnin": zseq.burnin})


def centered_series_from_state(w: EnvWindow, start: PsiState, lam: float,
                               a: int | None = None, b: int | None = None) -> CenteredSeries:
    """S_k from an arbitrary (psi, x) entering layer a."""
    a = w.a if a is None else a
    b = w.b if b is None else b
    i, j = w.idx(a), w.idx(b)
    r = sweep(w.P[i: j + 1], w.Q[i: j + 1], w.R[i: j + 1], start, store=False)
    inc = r.f - lam
    return CenteredSeries(np.cumsum(inc), inc, float(lam), {"kind": "state", "a": a})


@dataclass(frozen=True)
class Sigma2Estimate:
    sigma2_hat: float
    ci: tuple[float, float]
    batch_len: int
    n_batches: int


def sigma2_estimate(series: CenteredSeries, batch_len: int, level: float = 0.95) -> Sigma2Estimate:
    """Batch-means estimate of lim Var(S_n)/n with a delete-one-batch jackknife CI."""
    inc = np.asarray(series.increments, dtype=float)
    if batch_len < 1 or len(inc) < 10 * batch_len:
        raise ValueError("series too short: need at least 10 batches")
    nb = len(inc) // batch_len
    sums = inc[: nb * batch_len].reshape(nb, batch_len).sum(axis=1)

    def est(s):
        return float(((s - s.mean()) ** 2).sum() / (len(s) - 1) / batch_len)

    full = est(sums)
    jk = np.array([est(np.delete(sums, i)) for i in range(nb)])
    pseudo = nb * full - (nb - 1) * jk
    se = float(pseudo.std(ddof=1) / math.sqrt(nb))
    zq = stats.norm.ppf(0.5 + level / 2)
    return Sigma2Estimate(full, (float(max(0.0, full - zq * se)), float(full + zq * se)), batch_len, nb)


@dataclass(frozen=True)
class IPDiagnostic:
    path_t: np.ndarray
    path_v: np.ndarray
    endpoints: np.ndarray
    maxima: np.ndarray
    ks_endpoint: float | None
    ks_pvalue: float | None
    ks_max: float | None
    degenerate: bool


def ip_path(series: CenteredSeries, sigma: float, grid: int = 1001):
    """Piecewise-linear v_n(t)/sigma on [0, 1] through the points (k/n, S_k/sqrt n)."""
    S = np.concatenate([[0.0], np.asarray(series.values, dtype=float)])
    n = len(S) - 1
    t = np.linspace(0.0, 1.0, grid)
    v = np.interp(t * n, np.arange(n + 1), S) / (math.sqrt(n) * sigma)
    return t, v


def ip_diagnostic(series, sigma: float, grid: int = 1001) -> IPDiagnostic:
    """Rescaled path of the first series and KS statistics over all of them.

    ``series`` may be one CenteredSeries or a sequence from independent
    seeds. The endpoint v_n(1) is compared with N(0, 1) and the running
    maximum with the law of |N(0, 1)|.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    seq = [series] if isinstance(series, CenteredSeries) else list(series)
    t, v = ip_path(seq[0], sigma, grid)
    ends, maxs, raw = [], [], []
    for s in seq:
        vals = np.asarray(s.values, dtype=float)
        n = len(vals)
        ends.append(vals[-1] / (math.sqrt(n) * sigma))
        maxs.append(max(0.0, vals.max()) / (math.sqrt(n) * sigma))
        raw.append(np.abs(vals).max() / math.sqrt(n))
    ends, maxs = np.array(ends), np.array(maxs)
    degenerate = bool(max(raw) < 1e-6)
    ks = ksp = ksm = None
    if len(seq) >= 2 and not degenerate:
        r = stats.kstest(ends, "norm")
        ks, ksp = float(r.statistic), float(r.pvalue)
        ksm = float(stats.kstest(maxs, stats.halfnorm.cdf).statistic)
    return IPDiagnostic(t, v, ends, maxs, ks, ksp, ksm, degenerate)
