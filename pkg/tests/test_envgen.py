import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_triple
from stripwalk.envgen import (EnvSpec, OneDSpec, SpecError, Triple, constant_window,
                              discrete_spec, in_jal, jal1d_drift, jal_distance, jal_projection,
                              lift_1d, lift_1d_window, lift_vector, measured_epsilon,
                              sample_window, scalar_triple, site_atoms, stationary_pi,
                              validate_condition_c2)

QUARTER = np.array([0.25, 0.25, 0.0, 0.25, 0.25])   # p(-2..2)


def test_triple_validation():
    with pytest.raises(SpecError):
        Triple([[0.5]], [[0.6]], [[0.0]])
    with pytest.raises(SpecError):
        Triple([[1.1]], [[-0.1]], [[0.0]])
    t = scalar_triple(0.3, 0.5)
    assert t.R[0, 0] == pytest.approx(0.2)
    with pytest.raises(ValueError):
        t.P[0, 0] = 1.0
    mt = t.mirrored()
    assert mt.P[0, 0] == 0.5 and mt.Q[0, 0] == 0.3 and mt.R[0, 0] == t.R[0, 0]
    assert mt.mirrored() == t


def test_c2_zero_q_row_fails_q_clause():
    # lane 1 cannot reach layer n-1 before leaving the layer upward
    P = np.array([[0.25, 0.25], [0.2, 0.2]])
    Q = np.array([[0.0, 0.0], [0.2, 0.2]])
    R = np.array([[0.5, 0.0], [0.1, 0.1]])
    rep = validate_condition_c2(Triple(P, Q, R), 0.05)
    assert rep.r_ok and not rep.q_ok and not rep.ok
    assert any("Q" in c for c in rep.failing_clauses())


def test_c2_singular_r():
    rep = validate_condition_c2(Triple([[0.0]], [[0.0]], [[1.0]]), 0.1)
    assert not rep.r_ok and not rep.ok


def test_lift_quarter_margins_by_dense_solve():
    t = lift_vector(QUARTER, 2)
    assert np.allclose(t.P, [[0.25, 0.0], [0.25, 0.25]])
    assert np.allclose(t.R, [[0.0, 0.25], [0.25, 0.0]])
    assert np.allclose(t.Q, [[0.25, 0.25], [0.0, 0.25]])
    iv = np.linalg.solve(np.eye(2) - t.R, t.P)
    assert np.allclose(iv, [[1 / 3, 1 / 15], [1 / 3, 4 / 15]], atol=1e-15)
    rep = validate_condition_c2(t, 0.05)
    assert rep.p_margin == pytest.approx(1 / 15, abs=1e-15)
    assert rep.q_margin == pytest.approx(1 / 15, abs=1e-15)
    assert rep.ok
    # P + Q + R is doubly stochastic when all sites agree
    M = t.P + t.Q + t.R
    assert np.allclose(M.sum(axis=0), 1) and np.allclose(M.sum(axis=1), 1)


def test_stationary_doubly_stochastic_is_uniform():
    t = lift_vector(QUARTER, 2)
    assert np.allclose(stationary_pi(t), [0.5, 0.5], atol=1e-15)


@given(st.integers(0, 10**6))
def test_stationary_matches_eigendecomposition(seed):
    t = random_triple(np.random.default_rng(seed), 3)
    M = t.P + t.Q + t.R
    w, v = np.linalg.eig(M.T)
    ref = np.real(v[:, np.argmin(np.abs(w - 1))])
    ref /= ref.sum()
    assert np.max(np.abs(stationary_pi(t) - ref)) <= 1e-10


@given(st.integers(1, 3), st.integers(0, 10**6))
def test_lift_drift_identity(m, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(2 * m + 1)) * 0.9 + 0.1 / (2 * m + 1)
    t = lift_vector(p, m)
    assert m * jal_distance(t) == pytest.approx(jal1d_drift(p), abs=1e-12)


@given(st.integers(1, 3), st.integers(0, 10**6))
def test_zero_drift_lifts_onto_jal(m, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(2 * m + 1)) * 0.8 + 0.2 / (2 * m + 1)
    # remove the drift by moving mass between the outermost offsets
    d = jal1d_drift(p)
    k = d / (2 * m)
    p[0] += k
    p[-1] -= k
    if p.min() <= 0:
        return
    assert abs(jal1d_drift(p)) < 1e-14
    oned = OneDSpec(m, np.array([p]), np.array([1.0]))
    for t, _ in lift_1d(oned).support():
        assert abs(jal_distance(t)) <= 1e-12


def test_jal_projection_lands_on_surface():
    rng = np.random.default_rng(3)
    done = 0
    while done < 5:
        t0, t1 = random_triple(rng, 2), random_triple(rng, 2)
        if jal_distance(t0) * jal_distance(t1) >= 0:
            continue
        tj = jal_projection(t0, t1)
        assert in_jal(tj, 1e-13)
        done += 1


def test_atom_frequencies_within_3_sigma():
    spec = discrete_spec([scalar_triple(0.3, 0.7), scalar_triple(0.7, 0.3)], [0.4, 0.6])
    w = sample_window(spec, 17, 0, 10_000)
    n = len(w)
    k = int(np.sum(w.P[:, 0, 0] == 0.3))
    assert abs(k - 0.4 * n) <= 3 * np.sqrt(n * 0.4 * 0.6)


def test_windows_are_deterministic_and_consistent(dirichlet2):
    w1 = sample_window(dirichlet2, 5, -50, 50)
    w2 = sample_window(dirichlet2, 5, 0, 120)
    assert np.array_equal(w1.P[50:], w2.P[:51])
    assert np.array_equal(w1.Q[50:], w2.Q[:51])
    w3 = sample_window(dirichlet2, 6, -50, 50)
    assert not np.array_equal(w1.P, w3.P)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_dirichlet_family_floor_and_stochasticity(m):
    spec = EnvSpec(m=m, epsilon=0.05, kind="dirichlet")
    w = sample_window(spec, 1, 0, 500)
    tot = (w.P + w.Q + w.R).sum(axis=2)
    assert np.max(np.abs(tot - 1)) < 1e-13
    assert w.P.min() >= 0.05 - 1e-15 and w.Q.min() >= 0.05 - 1e-15
    for k in range(0, 500, 50):
        assert validate_condition_c2(w.triple(k), 0.05).ok


def test_lift_window_and_site_atoms():
    v = np.array([[0.1, 0.2, 0.3, 0.2, 0.2], [0.25, 0.05, 0.4, 0.05, 0.25]])
    oned = OneDSpec(2, v, np.array([0.5, 0.5]))
    spec = lift_1d(oned)
    w = sample_window(spec, 9, -3, 3)
    sites = np.arange(-3 * 2 + 1, 3 * 2 + 3)
    atoms = site_atoms(oned, 9, sites)
    ref = lift_1d_window(v[atoms], 2, a=-3)
    assert np.array_equal(w.P, ref.P) and np.array_equal(w.Q, ref.Q)
    assert np.array_equal(w.R, ref.R)


def test_measured_epsilon_and_constant_window():
    spec = discrete_spec([scalar_triple(0.3, 0.7), scalar_triple(0.7, 0.3)], [0.5, 0.5])
    assert spec.epsilon == pytest.approx(0.3)
    assert measured_epsilon(spec) == pytest.approx(0.3)
    w = constant_window(scalar_triple(0.6, 0.4), -2, 2)
    assert len(w) == 5 and np.all(w.P == 0.6)


def test_mirror_symmetry_detection(mirror_spec, scalar_spec):
    assert mirror_spec.is_mirror_symmetric()
    assert scalar_spec.is_mirror_symmetric()
    one = discrete_spec([scalar_triple(0.3, 0.7)], [1.0])
    assert not one.is_mirror_symmetric()
