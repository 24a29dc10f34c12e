import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stripwalk.envgen import (constant_window, discrete_spec, lift_vector, sample_window,
                              scalar_triple)
from stripwalk.potential import (NoValley, Valley, _valley_kernel, find_valley, potential_profile,
                                 predict_b_t, profile_from_increments, verify_valley)
from stripwalk.walk.experiments import scalar_potential

T10 = math.exp(10.0)


def brute_valley(phi, i0, D):
    """Exhaustive search over every triple; key (width, |b - i0|, b)."""
    n = len(phi)
    best = None
    for a in range(0, i0):
        for c in range(i0 + 1, n):
            seg = phi[a:c + 1]
            b = a + int(np.argmin(seg))
            if np.sum(seg <= phi[b] + 1e-12) > 1:
                continue
            if phi[a] < phi[a:b + 1].max() or phi[c] < phi[b:c + 1].max():
                continue
            if min(phi[a], phi[c]) < phi[b] + D:
                continue
            key = (c - a, abs(b - i0), b)
            if best is None or key < best[0]:
                best = (key, a, b, c)
    return None if best is None else best[1:]


def walk_phi(draw_ints, scale=0.37):
    return np.concatenate([[0.0], np.cumsum(np.asarray(draw_ints, float) * scale)])


def v_on_linear(s, delta=0.1):
    n = np.arange(-60, 61)
    return find_valley(s * np.abs(n).astype(float), T10, delta=delta, a=-60)


def test_v_shape_closed_form():
    v = v_on_linear(0.5)
    assert isinstance(v, Valley)
    assert (v.a, v.b_t, v.c) == (-20, 0, 20)
    assert (v.a_t, v.c_t) == (-22, 22)
    assert v.certificate["est2"] and v.certificate["est3"] and v.certificate["est5"]


def test_flat_potential_has_no_valley():
    v = find_valley(np.zeros(201), 1e6, a=-100)
    assert isinstance(v, NoValley) and not v.found and not v.passed


def test_small_t_rejected():
    with pytest.raises(ValueError):
        find_valley(np.zeros(5), 1.0, a=-2)


def test_double_well_breaks_est2():
    D = 10.0
    x = np.arange(-60, 61).astype(float)
    single = 0.5 * np.abs(x)
    v1 = find_valley(single, T10, a=-60)
    assert v1.certificate["est2"]
    # a second dip inside [b, c_t] deeper than (1 - delta) log t below a local peak
    dw = single.copy()
    i = 60 + 21
    dw[i] = dw[i - 1] - 9.5
    v2 = find_valley(dw, T10, a=-60)
    assert v2.found and not v2.certificate["est2"] and not v2.passed


@given(st.lists(st.integers(-3, 3), min_size=30, max_size=70), st.integers(0, 29),
       st.sampled_from([math.exp(1.5), math.exp(3.0)]))
def test_kernel_matches_brute_force(steps, shift, t):
    phi = walk_phi(steps) + np.linspace(0, 1e-6, len(steps) + 1)
    i0 = 1 + shift % (len(phi) - 2)
    phi = phi - phi[i0]
    v = find_valley(phi, t, a=-i0)
    ref = brute_valley(phi, i0, math.log(t))
    if ref is not None:
        status, b, a, c = _valley_kernel(np.ascontiguousarray(phi), i0, math.log(t), 1e-9)
        assert status == 0 and (a, b, c) == ref
    if ref is None:
        assert not v.found
    elif v.found:
        assert (v.a + i0, v.b_t + i0, v.c + i0) == ref
    else:
        # the oracle closed its valley but a_t, c_t ran off the window
        assert v.reason == "exhausted"


@given(st.lists(st.integers(-3, 3), min_size=60, max_size=120))
def test_certificate_reproducible(steps):
    phi = walk_phi(steps)
    i0 = len(phi) // 2
    phi = phi - phi[i0]
    v = find_valley(phi, math.exp(2.0), sigma2=1.0, a=-i0)
    if v.found:
        assert verify_valley(v, phi, -i0) == v.certificate
        b, ct = v.b_t + i0, v.c_t + i0
        dd = max((phi[s] - phi[s2] for s in range(b, ct + 1) for s2 in range(s, ct + 1)))
        assert v.certificate["est2"] == (dd <= 0.9 * 2.0)


@given(st.lists(st.integers(-3, 3), min_size=60, max_size=150))
def test_width_monotone_in_t(steps):
    phi = walk_phi(steps)
    i0 = len(phi) // 2
    phi = phi - phi[i0]
    prev = 0
    for D in (1.0, 2.0, 4.0):
        v = find_valley(phi, math.exp(D), a=-i0)
        if not v.found:
            break
        assert v.c - v.a >= prev
        prev = v.c - v.a


def test_scalar_closed_form_both_sides(scalar_spec):
    w = sample_window(scalar_spec, 7, -300, 300)
    prof = potential_profile(w, a=-100, b=100)
    ref = scalar_potential(scalar_spec, 7, -100, 100)
    assert np.allclose(prof.phi, ref, atol=1e-12)
    # the mirror is the same walk seen one layer down
    shift = ref[:-1] - ref[99]
    assert np.allclose(prof.phi_minus[1:], shift, atol=1e-12)


def test_anchor_and_additivity(dirichlet2):
    w = sample_window(dirichlet2, 3, -800, 800)
    prof = potential_profile(w, a=-200, b=200)
    assert prof.phi_at(0) == 0.0 and prof.phi_minus_at(0) == 0.0
    assert np.allclose(np.diff(prof.phi), prof.f[1:], atol=1e-12)
    w2 = sample_window(dirichlet2, 3, -600, 900)
    prof2 = potential_profile(w2, a=-150, b=250)
    assert np.max(np.abs(prof2.phi[:351] - prof.phi[50:])) < 1e-9


def test_profile_from_increments_needs_zero():
    with pytest.raises(ValueError):
        profile_from_increments(1, np.ones(4))


def test_predict_matches_scalar_oracle(scalar_spec):
    for seed in range(3):
        v, (a, b) = predict_b_t(scalar_spec, seed, 1e6, delta=0.1, gamma=0.3)
        assert v.found
        phi = scalar_potential(scalar_spec, seed, a, b)
        ref = find_valley(phi, 1e6, delta=0.1, gamma=0.3, a=a)
        assert (ref.a_t, ref.b_t, ref.c_t) == (v.a_t, v.b_t, v.c_t)


def test_constant_jal_env_never_forms_valley():
    t = lift_vector(np.array([0.1, 0.3, 0.2, 0.1, 0.3]), 2)
    v, (a, b) = predict_b_t(discrete_spec([t], [1.0]), 0, 1e6, max_layers=4001)
    assert not v.found
    assert b - a + 1 >= 4000


def test_constant_tilted_env_has_no_valley_around_origin():
    # straight line: depth is never reached on both sides
    w = constant_window(scalar_triple(0.6, 0.4), -500, 500)
    prof = potential_profile(w, a=-400, b=400)
    assert not find_valley(prof, 1e3).found
