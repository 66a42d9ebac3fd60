import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frontlab.nonlinearity import build_power_family
from frontlab.wave import (ConnectionFailure, DecayClass, TravelingWave, WaveProfile,
                           decay_asymptotics, hadeler_rothe_integrand, hadeler_rothe_value,
                           integrate_wave, minimal_profile, minimal_speed, profile_bounds_check,
                           solve_profile_ode)

from conftest import power, profile


def test_pushmi_profile_closed_form():
    p = solve_profile_ode(power(2, 1.0), 2.0)
    u = p.u_grid
    assert isinstance(p, WaveProfile)
    assert u.size >= 4097
    assert np.max(np.abs(p.eta - (u - u**2))) < 1e-6


def test_pushed_profile_closed_form():
    p = solve_profile_ode(power(2, 4.0), 2.5, root="plus")
    u = p.u_grid
    assert np.max(np.abs(p.eta - 2 * (u - u**2))) < 1e-6


def test_slow_speed_fails():
    r = solve_profile_ode(power(2, 0.0), 1.5)
    assert isinstance(r, ConnectionFailure)
    assert not r
    assert r.u_hit > 0


@pytest.mark.parametrize("chi,c", [(1.0, 2.0), (4.0, 2.5), (0.0, 2.0), (0.5, 2.0)])
def test_minimal_speed(chi, c):
    assert minimal_speed(power(2, chi)) == pytest.approx(c, abs=1e-3)


@pytest.mark.parametrize("chi", [0.0, 0.5, 1.0, 4.0])
def test_profile_invariants(chi):
    m = power(2, chi)
    p = profile(2, chi)
    assert p.eta[0] == 0 and p.eta[-1] == 0
    assert np.all(p.eta[1:-1] > 0)
    fmax = float(np.max(m.f(p.u_grid)))
    assert np.max(np.abs(p.residual(m))) < 1e-6 * fmax
    h = p.u_grid[1] - p.u_grid[0]
    assert np.all(np.gradient(p.eta, h)[1:-1] < p.c)
    # indicial root: eta'(0)^2 - c eta'(0) + f'(0) = 0
    lc = p.eta_prime_0
    assert abs(lc * lc - p.c * lc + m.lam**2) < 1e-6


def test_pushed_takes_plus_root():
    p = profile(2, 4.0)
    assert p.eta_prime_0 == pytest.approx(2.0, abs=1e-9)


@pytest.mark.parametrize("chi", [0.0, 1.0, 4.0])
def test_speed_monotonicity(chi):
    m = power(2, chi)
    c = minimal_speed(m)
    for dc in (0.1, 1.0):
        assert isinstance(solve_profile_ode(m, c + dc), WaveProfile)


def test_hadeler_rothe_pushmi_constant():
    u = np.linspace(0, 1, 2049)
    m = power(2, 1.0)
    vals = hadeler_rothe_integrand(u - u**2, m, u)
    assert np.max(np.abs(vals - 2.0)) < 1e-10
    assert hadeler_rothe_value(u - u**2, m, u) == pytest.approx(2.0, abs=1e-10)


def test_hadeler_rothe_semi_bound_and_pushed():
    u = np.linspace(0, 1, 2049)
    assert hadeler_rothe_value(u - u**2, power(2, 0.5), u) <= 2 + 1e-10
    assert hadeler_rothe_value(2 * (u - u**2), power(2, 4.0), u) == pytest.approx(2.5, abs=1e-10)


@pytest.mark.parametrize("p", [np.r_[0.1, np.ones(9)], np.r_[0.0, -np.ones(9)],
                               np.r_[0.0, 0.0, np.ones(8)]])
def test_hadeler_rothe_rejects(p):
    with pytest.raises(ValueError):
        hadeler_rothe_integrand(p, power(2, 1.0))


@pytest.mark.parametrize("chi,k", [(1.0, 1.0), (4.0, 2.0)])
def test_wave_closed_forms(chi, k):
    m = power(2, chi)
    w = integrate_wave(profile(2, chi), m)
    exact = 1.0 / (1.0 + np.exp(k * w.x_grid))
    assert np.max(np.abs(w.U - exact)) < 1e-6
    assert np.all(np.diff(w.U) <= 0)
    inner = w.U < 1 - 1e-12
    assert np.all(np.diff(w.U[inner]) < 0)
    assert w.U[-1] < 1e-8


@pytest.mark.parametrize("chi", [0.0, 0.5, 1.0, 4.0])
def test_wave_residuals_and_roundtrip(chi):
    m = power(2, chi)
    p = profile(2, chi)
    w = integrate_wave(p, m, dx=0.02)
    r2, r1 = w.residuals(m)
    assert np.max(np.abs(r2)) < 1e-6
    assert np.max(np.abs(r1)) < 1e-6
    # -U'/eta(U) == 1 away from the saturated ends
    Ux = np.gradient(w.U, w.dx, edge_order=2)
    sel = (w.U > 1e-6) & (w.U < 1 - 1e-6)
    sel[:3] = sel[-3:] = False
    ratio = -Ux[sel] / p(w.U[sel])
    assert np.max(np.abs(ratio - 1)) < 1e-3  # second-order stencil on dx = 0.02
    alpha0 = m.alpha(np.array([w.U[np.argmin(np.abs(w.x_grid))]]))[0]
    assert alpha0 == pytest.approx(0.5, abs=1e-9)


def test_wave_roundtrip_fourth_order():
    from frontlab.stencils import d1_4th
    m = power(2, 0.5)
    p = profile(2, 0.5)
    w = integrate_wave(p, m, dx=0.02)
    sel = (w.U > 1e-6) & (w.U < 1 - 1e-6)
    sel[:3] = sel[-3:] = False
    ratio = -d1_4th(w.U, w.dx)[sel] / p(w.U[sel])
    assert np.max(np.abs(ratio - 1)) < 1e-5


def test_wave_extent_too_small():
    with pytest.raises(ValueError):
        integrate_wave(profile(2, 1.0), power(2, 1.0), x_extent=(10, 5))


def test_decay_synthetic():
    x = np.arange(-10, 60, 0.05)
    U = np.where(x > 0, (2 * x + 3) * np.exp(-x), 1 - 0.5 * np.exp(x))
    fit = decay_asymptotics(TravelingWave(x, U, 2.0, 1.0))
    assert fit.D == pytest.approx(2.0, abs=1e-8)
    assert fit.B == pytest.approx(3.0, abs=1e-8)
    assert fit.classification is DecayClass.LINEAR_PREFACTOR


def test_decay_classification():
    w1 = integrate_wave(profile(2, 1.0), power(2, 1.0))
    f1 = decay_asymptotics(w1)
    assert f1.classification is DecayClass.PURE_EXPONENTIAL
    assert f1.B == pytest.approx(1.0, abs=1e-4)
    w5 = integrate_wave(profile(2, 0.5), power(2, 0.5), x_extent=(30, 60))
    f5 = decay_asymptotics(w5)
    assert f5.classification is DecayClass.LINEAR_PREFACTOR and f5.D > 0


def test_decay_too_short():
    x = np.arange(0, 10, 0.25)
    with pytest.raises(ValueError):
        decay_asymptotics(TravelingWave(x, np.exp(-3 * x), 2.0, 3.0))


@pytest.mark.parametrize("chi", [0.0, 0.5, 1.0])
def test_profile_bounds(chi):
    rep = profile_bounds_check(profile(2, chi), power(2, chi))
    assert rep.passed
    if chi == 1.0:
        assert abs(rep.lower_violation) < 1e-8 and abs(rep.upper_violation) < 1e-8


def test_profile_bounds_requires_chi_range():
    with pytest.raises(ValueError):
        profile_bounds_check(profile(2, 4.0), power(2, 4.0))


def test_pulled_ratio_tends_to_lambda_slowly():
    # linear-prefactor waves: eta/(lam_c u) - 1 behaves like 1/log u, negative
    p = profile(2, 0.5)
    u = np.array([1e-3, 1e-5, 1e-7])
    dev = p(u) / (p.eta_prime_0 * u) - 1
    assert np.all(dev < 0)
    assert np.all(np.diff(np.abs(dev)) < 0)


@given(chi=st.floats(1.2, 6.0))
@settings(max_examples=6, deadline=None)
def test_pushed_speed_formula(chi):
    m = build_power_family(2, chi)
    c = minimal_speed(m)
    assert c == pytest.approx(1 / math.sqrt(chi) + math.sqrt(chi), abs=1e-4)
    p = minimal_profile(m)
    assert p.c == pytest.approx(1 / math.sqrt(chi) + math.sqrt(chi), abs=1e-9)
    assert p.eta_prime_0 == pytest.approx(math.sqrt(chi), abs=1e-6)


@given(lam=st.floats(0.5, 3.0), chi=st.sampled_from([0.0, 1.0]))
@settings(max_examples=6, deadline=None)
def test_pulled_speed_scales_with_lambda(lam, chi):
    assert minimal_speed(build_power_family(2, chi, lam)) == pytest.approx(2 * lam, rel=1e-6)
