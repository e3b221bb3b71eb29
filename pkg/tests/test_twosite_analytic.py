import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from sffdl import rmt_core as rc
from sffdl import twosite_analytic as ta


def test_gamma_at_band_center():
    assert ta.gamma(0.0, 1.0) == pytest.approx(16 / (3 * math.pi), rel=1e-6)
    assert ta.gamma(4.5, 1.0) == 0.0


def test_gamma_bar():
    assert ta.gamma_bar(1.0) == pytest.approx(1.214, abs=1e-3)
    assert ta.gamma_bar(0.1) == pytest.approx(0.01 * ta.gamma_bar(1.0), rel=1e-12)


def test_regime_warning():
    with pytest.warns(RuntimeWarning):
        ta.TwoSiteParams(10, 0.9)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ta.TwoSiteParams(1000, 0.1)
    with pytest.raises(ValueError):
        ta.TwoSiteParams(10, 0.0)


def test_transfer_distribution_mass():
    e1, e2, lam, t = 0.3, -0.8, 0.1, 50.0
    s = e1 + e2
    mass, _ = integrate.quad(lambda w: ta.transfer_distribution(w, e1, e2, lam, t), e1 - 2, e1 + 2, limit=200)
    lo, hi = max(-2.0, s - 2.0), min(2.0, s + 2.0)
    # support is where both new energies lie in the band
    mass, _ = integrate.quad(lambda w: ta.transfer_distribution(w, e1, e2, lam, t), e1 - hi, e1 - lo, limit=200)
    assert mass + ta.no_exchange_weight(s, lam, t) == pytest.approx(1.0, abs=1e-5)
    assert np.all(ta.transfer_distribution(np.linspace(-1, 1, 5), 1.9, 2.0, lam, t) >= 0)


def test_c11_endpoints_and_monotone():
    lam = 0.1
    assert ta.c11_pred(0.0, lam) == pytest.approx(1.0, abs=1e-6)
    assert ta.c11_limit() == pytest.approx(0.5, abs=1e-8)
    assert ta.c11_pred(1e7, lam) == pytest.approx(0.5, abs=1e-5)
    c = ta.c11_pred(np.linspace(0, 5 / lam**2, 40), lam)
    assert np.all(np.diff(c) < 0)
    np.testing.assert_allclose(c + ta.c12_pred(np.linspace(0, 5 / lam**2, 40), lam), 1.0, atol=1e-14)


def test_c11_early_slope_is_mean_rate():
    # dC11/dt at 0 = -int (S2 - B) gamma; check against finite difference of the closed form
    lam, h = 0.1, 1e-3
    slope = (ta.c11_pred(h, lam) - ta.c11_pred(0.0, lam)) / h
    rho2 = rc.total_density(2)
    e = np.linspace(-4, 4, 8001)
    g = 2 * math.pi * lam**2 * rho2(e)
    ref = -np.trapezoid((rc.two_site_moment(2, e) - 0.25 * e * e * rho2(e)) * g, e)
    assert slope == pytest.approx(ref, rel=1e-3)


def test_eq47_form_agrees_with_windowed_form_at_large_N():
    p = ta.TwoSiteParams(10**6, 0.01)
    t = np.array([1.0, 10.0, 100.0])
    np.testing.assert_allclose(ta.k1_contribution(t, p), ta.k1_eq47(t, p.lam), rtol=1e-8)


def test_zero_coupling_factorizes():
    # with no exchange the two windows decouple: K1 = (int k)^2
    N, t = 200, np.array([5.0, 80.0, 300.0, 500.0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        p = ta.TwoSiteParams(N, 1e-300)
    single = rc.k1_approx(N, t) - N**2 * (rc.bessel_j1(2 * t) / t) ** 2
    np.testing.assert_allclose(ta.k1_contribution(t, p), single**2, rtol=1e-9)
    assert np.all(ta.k2_contribution(t, 1e-300) == 0.0)


def test_late_ramp_slope_is_four_over_pi():
    p = ta.TwoSiteParams(2000, 0.1)
    t = np.geomspace(2e5, 2e6, 30)
    K = ta.k1_contribution(t, p) + ta.k2_contribution(t, p.lam)
    slope = np.polyfit(t, K, 1)[0]
    assert slope / (4 / math.pi) == pytest.approx(1.0, abs=0.01)


def test_crossover_plateau_and_ramp():
    N = 100
    c = ta.k_tot_crossover(np.array([1e-3, 10.0, 1e7]), N)
    assert c.values[-1] == float(N**2)
    # ramp regime: int t/2pi over the band of width 8
    # (tabulated density: ~1e-5 resolution at the band edge)
    assert c.values[0] == pytest.approx(8 * 1e-3 / (2 * math.pi), rel=1e-4)
    t = np.geomspace(1, 1e6, 200)
    assert np.all(np.diff(ta.k_tot_crossover(t, N).values) >= -1e-9)


def test_crossover_matches_quadrature():
    N, t = 50, 3000.0
    rho2 = rc.total_density(2)
    ref, _ = integrate.quad(lambda e: min(t / (2 * math.pi), N**2 * rho2(e)), -4, 4, limit=400)
    assert ta.k_tot_crossover(np.array([t]), N).values[0] == pytest.approx(ref, rel=1e-4)


def test_early_and_late_curves_overlap():
    # the early form carries the oscillating disconnected term; average it
    # over one period (pi) before comparing the ramps
    p = ta.TwoSiteParams(130, 0.05)
    for centre in (25.0, 30.0):
        t = np.linspace(centre - math.pi / 2, centre + math.pi / 2, 201)
        curves = ta.k_two_site_curve(t, p)
        rel = np.mean(curves["early"].values) / np.mean(curves["late"].values) - 1
        assert abs(rel) < 0.10
    assert set(curves) == {"early", "late", "crossover"}
