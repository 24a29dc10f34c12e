import math

import numpy as np
import pytest
from scipy import stats

from stripwalk.envgen import (EnvSpec, EnvWindow, discrete_spec, lift_vector, sample_window,
                              scalar_triple)
from stripwalk.lyap import (LyapEstimate, analytic_zero_reason, centered_series,
                            centered_series_from_state, classify_regime, increments,
                            ip_diagnostic, lyapunov_estimate, sigma2_estimate)
from stripwalk.zeta import PsiState, zeta_sequence

L73 = math.log(7 / 3)


def test_constant_scalar_exact():
    est = lyapunov_estimate(discrete_spec([scalar_triple(0.6, 0.4)], [1.0]), 5000, burnin=10)
    assert abs(est.lambda_hat - math.log(2 / 3)) <= 1e-9
    assert est.std_error == 0.0
    assert classify_regime(est) == "transient_right"


def test_symmetric_scalar_recurrent(scalar_spec):
    est = lyapunov_estimate(scalar_spec, 200_000, seed=1)
    assert abs(est.lambda_hat) <= 3 * est.std_error
    assert est.analytic_zero == "scalar"
    assert classify_regime(est) == "recurrent_candidate"


def test_negative_mean_is_transient_right():
    spec = discrete_spec([scalar_triple(0.4, 0.6), scalar_triple(0.7, 0.3)], [0.5, 0.5])
    est = lyapunov_estimate(spec, 200_000, seed=2)
    assert est.lambda_hat < 0 and classify_regime(est) == "transient_right"
    assert analytic_zero_reason(spec) is None


def test_classify_examples():
    assert classify_regime(LyapEstimate(-0.405, 1e-9, 10)) == "transient_right"
    assert classify_regime(LyapEstimate(0.405, 1e-9, 10)) == "transient_left"
    est = LyapEstimate(0.0002, 0.001, 10, analytic_zero="scalar")
    assert classify_regime(est) == "recurrent_candidate"
    assert classify_regime(LyapEstimate(0.0002, 0.001, 10)) == "inconclusive"


def test_analytic_zero_reasons(mirror_spec, dirichlet2):
    assert analytic_zero_reason(mirror_spec) == "mirror"
    assert analytic_zero_reason(dirichlet2) == "mirror"
    jal = discrete_spec([lift_vector(np.array([0.25, 0.25, 0, 0.25, 0.25]), 2)], [1.0])
    assert analytic_zero_reason(jal) == "constant-jal"


def test_constant_jal_lambda_zero():
    t = lift_vector(np.array([0.25, 0.25, 0.0, 0.25, 0.25]), 2)
    est = lyapunov_estimate(discrete_spec([t], [1.0]), 20_000)
    assert abs(est.lambda_hat) <= 1e-8


def test_constant_env_series_bounded():
    t = lift_vector(np.array([0.1, 0.3, 0.2, 0.1, 0.3]), 2)
    spec = discrete_spec([t], [1.0])
    est = lyapunov_estimate(spec, 10_000)
    w = sample_window(spec, 0, 0, 20_000)
    s = centered_series_from_state(w, PsiState.identity(2), est.lambda_hat)
    assert np.max(np.abs(s.values)) < 5.0
    assert sigma2_estimate(s, 200).sigma2_hat < 1e-4


def test_scalar_series_is_simple_random_walk(scalar_spec):
    w = sample_window(scalar_spec, 3, -10, 5000)
    z = zeta_sequence(w, (1, 5000))
    s = centered_series(w, z, 0.0)
    expect = np.log(w.Q[11:, 0, 0] / w.P[11:, 0, 0])
    assert np.allclose(s.increments, expect, atol=1e-13)
    assert set(np.round(np.abs(s.increments), 12)) == {round(L73, 12)}


def test_start_state_independence(dirichlet2):
    w = sample_window(dirichlet2, 4, -400, 20_000)
    z = zeta_sequence(w, (0, 20_000))
    s1 = centered_series(w, z, 0.0)
    s2 = centered_series_from_state(w, PsiState.uniform(2), 0.0, 0, 20_000)
    gap = np.abs(s1.values - s2.values)
    assert gap.max() < 3.0
    # the gap settles: no trend over the second half
    assert np.ptp(gap[10_000:]) < 1e-8


def test_scalar_sigma2(scalar_spec):
    f = increments(scalar_spec, 5, 1, 200_000, 0)
    from stripwalk.lyap import CenteredSeries
    s = CenteredSeries(np.cumsum(f), f, 0.0)
    est = sigma2_estimate(s, 500)
    # 400 batches: relative SE near sqrt(2/400)
    assert est.sigma2_hat == pytest.approx(L73 ** 2, rel=0.3)
    assert est.ci[0] <= L73 ** 2 <= est.ci[1]


def test_sigma2_needs_ten_batches():
    from stripwalk.lyap import CenteredSeries
    with pytest.raises(ValueError):
        sigma2_estimate(CenteredSeries(np.zeros(50), np.zeros(50), 0.0), 10)


def test_ip_endpoint_normality_scalar(scalar_spec):
    from stripwalk.lyap import CenteredSeries
    rng = np.random.default_rng(0)
    series = []
    for _ in range(2000):
        inc = rng.choice([-L73, L73], size=2000)
        series.append(CenteredSeries(np.cumsum(inc), inc, 0.0))
    d = ip_diagnostic(series, L73)
    assert not d.degenerate
    assert d.ks_endpoint <= 0.04
    assert d.path_t[0] == 0.0 and d.path_v[0] == 0.0


def test_ip_degenerate_for_constant_series():
    from stripwalk.lyap import CenteredSeries
    s = CenteredSeries(np.zeros(100), np.zeros(100), 0.0)
    assert ip_diagnostic([s, s], 1.0).degenerate
