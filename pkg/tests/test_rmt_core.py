import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from sffdl import rmt_core as rc


def test_semicircle_density_values():
    assert rc.semicircle_density(0.0) == pytest.approx(1 / math.pi, rel=1e-15)
    assert rc.semicircle_density(1.0) == pytest.approx(math.sqrt(3) / (2 * math.pi), rel=1e-14)
    assert rc.semicircle_density(2.0) == 0.0
    assert rc.semicircle_density(2.5) == 0.0
    np.testing.assert_array_equal(rc.semicircle_density(np.array([-3.0, 3.0])), [0.0, 0.0])


@given(st.floats(-3, 3))
def test_semicircle_is_even_and_nonnegative(x):
    assert rc.semicircle_density(x) == rc.semicircle_density(-x)
    assert rc.semicircle_density(x) >= 0


def test_semicircle_cdf_matches_quadrature():
    for x in (-1.5, -0.3, 0.0, 0.7, 1.9):
        ref, _ = integrate.quad(rc.semicircle_density, -2, x)
        assert rc.semicircle_cdf(x) == pytest.approx(ref, abs=1e-12)
    assert rc.semicircle_cdf(-5) == 0.0 and rc.semicircle_cdf(5) == 1.0


def test_catalan_moments():
    assert [rc.semicircle_moment(p) for p in (0, 2, 4, 6, 8)] == [1, 1, 2, 5, 14]
    x, w = rc.semicircle_nodes(400)
    for p in (2, 4, 6):
        assert np.dot(w, x**p) == pytest.approx(rc.semicircle_moment(p), abs=1e-12)
    with pytest.raises(ValueError):
        rc.semicircle_moment(3)


@pytest.mark.parametrize("L", [1, 2, 3, 5, 8])
def test_total_density_normalization_and_variance(L):
    d = rc.total_density(L)
    assert d.mass() == pytest.approx(1.0, abs=1e-8)
    # independent sites: the variance adds up to L
    assert d.integrate(lambda e: e * e) == pytest.approx(L, rel=1e-6)
    assert (d.support_lo, d.support_hi) == (-2.0 * L, 2.0 * L)


def test_two_site_density_at_zero():
    assert rc.total_density(2)(0.0) == pytest.approx(8 / (3 * math.pi**2), rel=1e-6)


def test_two_site_density_against_direct_convolution():
    rho = rc.semicircle_density
    for s in (0.5, 1.7, 3.1):
        ref, _ = integrate.quad(lambda x: rho(x) * rho(s - x), max(-2, s - 2), min(2, s + 2), limit=200)
        assert rc.total_density(2)(s) == pytest.approx(ref, rel=1e-5)


def test_two_site_moments_reflection():
    s = np.linspace(-3.9, 3.9, 17)
    g0 = rc.two_site_moment(0, s)
    g1 = rc.two_site_moment(1, s)
    np.testing.assert_allclose(g1, 0.5 * s * g0, atol=1e-14)
    # second moment over the full band is E[eta^2] = 1
    d = rc.total_density(2)
    m2 = np.trapezoid(rc.two_site_moment(2, d.grid), d.grid)
    assert m2 == pytest.approx(1.0, abs=1e-6)


def test_total_density_rejects_bad_L():
    with pytest.raises(ValueError):
        rc.total_density(0)


def test_gue_variance(rng):
    N = 200
    H = rc.sample_gue(rc.GueSpec.site(N), rng)
    np.testing.assert_allclose(H, H.conj().T)
    off = H[np.triu_indices(N, 1)]
    assert np.mean(np.abs(off) ** 2) == pytest.approx(1 / N, rel=0.02)
    ev = np.linalg.eigvalsh(H)
    assert np.mean(ev**2) == pytest.approx(1.0, rel=0.03)
    assert ev.min() > -2.2 and ev.max() < 2.2


def test_semicircle_sampler_moments(rng):
    x = rc.sample_semicircle_energy(rng, 200_000)
    assert x.min() >= -2 and x.max() <= 2
    assert np.mean(x**2) == pytest.approx(1.0, abs=0.01)
    assert np.mean(x**4) == pytest.approx(2.0, abs=0.03)


def test_bessel_j1_matches_reference():
    x = np.array([0.1, 1.0, 3.8317, 10.0])
    np.testing.assert_allclose(rc.bessel_j1(x), special.jv(1, x), rtol=1e-14, atol=1e-16)


def test_k_window_limits():
    assert rc.k_window(0.0, 2 * math.pi, 100) == pytest.approx(1.0)
    assert rc.k_window(0.0, 1e6, 100) == pytest.approx(100 / math.pi)


@settings(deadline=None, max_examples=30)
@given(st.floats(0.0, 400.0))
def test_k1_approx_window_integral_matches_quadrature(t):
    N = 100
    # the window has kinks at +-eps_c where the ramp meets the plateau
    eps_c = math.sqrt(max(4.0 - (t / N) ** 2, 0.0))
    f = lambda e: rc.k_window(e, t, N)  # noqa: E731
    ref = sum(integrate.quad(f, a, b, limit=200)[0] for a, b in ((-2, -eps_c), (-eps_c, eps_c), (eps_c, 2)) if b > a)
    direct = rc.k1_approx(N, t) - (N * special.j1(2 * t) / t) ** 2 if t > 0 else rc.k1_approx(N, t) - N**2
    assert direct == pytest.approx(ref, rel=1e-6, abs=1e-9)


def test_k1_approx_endpoints():
    assert rc.k1_approx(50, 0.0) == pytest.approx(50**2)
    assert rc.k1_approx(50, 1000.0) == pytest.approx(50, rel=1e-3)
