import math

import numpy as np
import pytest
from scipy import special, stats

from sffdl import _kernels
from sffdl import master_sim as ms
from sffdl.curves import Curve
from sffdl.rmt_core import semicircle_cdf, semicircle_density
from sffdl.seeding import kind_code
from sffdl.twosite_analytic import gamma_bar


def conditional_cdf(x, s, n=64):
    """P(new left energy <= x | pair energy s) by Gauss-Legendre quadrature."""
    lo = np.maximum(-2.0, s - 2.0)
    g, w = np.polynomial.legendre.leggauss(n)

    def mass(a, b):
        u = 0.5 * (b - a)[:, None] * (g[None, :] + 1) + a[:, None]
        f = semicircle_density(u) * semicircle_density(s[:, None] - u)
        return 0.5 * (b - a) * (f @ w)

    hi = np.minimum(2.0, s + 2.0)
    return mass(lo, x) / mass(lo, hi)


def test_pair_rate_matches_density():
    assert ms.pair_rate(0.0) == pytest.approx(2 * math.pi * 8 / (3 * math.pi**2), rel=1e-6)
    lo, inv_h, coef = ms._rate_table()
    for s in (-3.7, -1.0, 0.0, 0.4, 2.9):
        assert _kernels.rate(s, lo, inv_h, coef) == pytest.approx(ms.pair_rate(s), rel=1e-9, abs=1e-12)


def test_pair_update_law(rng):
    s = rng.uniform(-3.8, 3.8, 4000)
    x = np.array([ms.sample_pair_update(si / 2, si / 2, rng)[0] for si in s])
    assert stats.kstest(conditional_cdf(x, s), "uniform").pvalue > 0.01


def test_pair_update_rejects_outside_band(rng):
    with pytest.raises(ValueError):
        ms.sample_pair_update(2.0, 2.0, rng)


def test_select_bond_frequencies(rng):
    cfg = ms.EnergyConfig(np.array([0.1, -1.5, 1.9, 0.0, 0.3]))
    counts = np.bincount([ms.select_bond(cfg, rng) for _ in range(20000)], minlength=cfg.n_bonds)
    expected = cfg.rates / cfg.total_rate * 20000
    assert stats.chisquare(counts, expected).pvalue > 0.001
    waits = [ms.sample_waiting_time(cfg, rng) for _ in range(20000)]
    assert np.mean(waits) == pytest.approx(1 / cfg.total_rate, rel=0.03)


def test_apply_keeps_pair_sum():
    cfg = ms.EnergyConfig(np.array([0.5, -0.2, 1.0]), "periodic")
    cfg.apply(2, 0.1)
    assert cfg.energies.sum() == pytest.approx(1.3, abs=1e-15)
    assert cfg.energies[0] == pytest.approx(1.4)


def test_trajectory_conserves_energy_and_pairs():
    spec = ms.SimSpec(L=16, t_max=20.0, obs_times=(5.0, 20.0), master_seed=3)
    log = ms.run_trajectory(spec, 7)
    assert log.n_events > 100
    assert abs(log.initial.sum() - log.final.sum()) < 1e-10
    np.testing.assert_allclose(log.before.sum(axis=1), log.after.sum(axis=1), atol=1e-13)
    assert np.all(np.diff(log.event_times) > 0)


def test_kernel_pair_update_law():
    spec = ms.SimSpec(L=24, t_max=30.0, obs_times=(30.0,), master_seed=11)
    before, after = [], []
    for k in range(6):
        log = ms.run_trajectory(spec, k)
        before.append(log.before)
        after.append(log.after)
    b, a = np.concatenate(before), np.concatenate(after)
    s = b.sum(axis=1)
    assert stats.kstest(conditional_cdf(a[:, 0], s), "uniform").pvalue > 0.01


def test_kernel_generator_uniforms():
    u = _kernels.uniforms(np.uint64(1), np.uint64(kind_code("x")), 0, 100_000)
    assert u.min() >= 0 and u.max() < 1
    assert stats.kstest(u, "uniform").pvalue > 0.01


def test_replay_matches_ensemble():
    spec = ms.SimSpec(L=12, t_max=8.0, obs_times=(2.0, 8.0), master_seed=5, w_bonds="all")
    res = ms.run_ensemble(spec, 6, chunk=6, snapshots=True)
    for k in range(6):
        log = ms.run_trajectory(spec, k)
        np.testing.assert_array_equal(res.snapshots[k, 1:], log.snapshots)
        fe = [log.first_exchange(b) for b in range(spec.n_bonds)]
        np.testing.assert_array_equal(np.minimum(res.first_exchange[k], np.inf), np.minimum(fe, np.inf))


def test_chunking_and_workers_do_not_change_results():
    spec = ms.SimSpec(L=10, t_max=5.0, obs_times=(1.0, 5.0), master_seed=2)
    a = ms.run_ensemble(spec, 40, chunk=40)
    b = ms.run_ensemble(spec, 40, chunk=7)
    c = ms.run_ensemble(spec, 40, chunk=10, workers=2)
    for r in (b, c):
        np.testing.assert_allclose(r.corr_sum, a.corr_sum, rtol=1e-12, atol=1e-12)
        assert r.events == a.events


def test_drift_guard(monkeypatch):
    monkeypatch.setattr(ms, "DRIFT_LIMIT", -1.0)
    with pytest.raises(FloatingPointError):
        ms.run_ensemble(ms.SimSpec(L=4, t_max=1.0, obs_times=(1.0,)), 2)


def test_stationarity_of_product_law():
    spec = ms.SimSpec(L=16, t_max=20.0, obs_times=tuple(np.linspace(1, 20, 20)), master_seed=8)
    res = ms.run_ensemble(spec, 400, chunk=400, snapshots=True)
    for k in range(1, 21):
        assert stats.kstest(res.snapshots[:, k, :].ravel(), semicircle_cdf).pvalue > 0.001


def test_checkpoint_roundtrip(tmp_path):
    spec = ms.SimSpec(L=8, t_max=3.0, obs_times=(1.0, 3.0), master_seed=1)
    res = ms.run_ensemble(spec, 10)
    path = ms.save_checkpoint(res, tmp_path / "ck.bin")
    back = ms.load_checkpoint(path, spec)
    np.testing.assert_array_equal(back.corr_sum, res.corr_sum)
    assert back.n == res.n and back.events == res.events
    with pytest.raises(ValueError):
        ms.load_checkpoint(path, ms.SimSpec(L=9, t_max=3.0, obs_times=(1.0, 3.0), master_seed=1))


def test_autocorrelator_sum_rule():
    # energy is conserved, so sum_x C_0x(t) stays at the t = 0 value [eps^2] = 1
    spec = ms.SimSpec(L=64, t_max=10.0, obs_times=(2.0, 10.0), master_seed=4, boundary="periodic")
    res = ms.run_ensemble(spec, 4000, chunk=4000)
    C = ms.autocorrelator(res)
    total = C.values.sum(axis=1)
    err = np.sqrt((C.stderr**2).sum(axis=1))
    assert np.all(np.abs(total - 1) < 5 * err)


def _lattice_curve(D, times, x):
    t = np.asarray(times)[:, None]
    vals = special.ive(np.abs(x)[None, :], 2 * D * t)
    return Curve(times, vals, 1, 1e-4 * np.ones_like(vals), {}, ("x",), (x,))


def test_collapse_recovers_lattice_diffusion_constant():
    x = np.arange(-20, 21)
    C = _lattice_curve(0.69, np.arange(10.0, 41.0), x)
    fit = ms.collapse_check(C, 10, 40)
    assert fit.D == pytest.approx(0.69, rel=1e-8)
    assert fit.max_residual < 1e-8


def test_collapse_gaussian_model():
    x = np.arange(-60, 61)
    t = np.arange(100.0, 300.0, 20.0)
    vals = np.exp(-(x[None, :] ** 2) / (4 * 0.7 * t[:, None])) / np.sqrt(4 * np.pi * 0.7 * t[:, None])
    C = Curve(t, vals, 1, None, {}, ("x",), (x,))
    assert ms.collapse_check(C, 100, 300, model="gaussian").D == pytest.approx(0.7, rel=1e-8)


def test_d_of_t_from_curve():
    x = np.arange(-40, 41)
    C = _lattice_curve(0.7, np.array([2.0, 5.0]), x)
    np.testing.assert_allclose(ms.d_of_t(C).values, 0.7, rtol=1e-10)


def test_fit_w_late_synthetic():
    t = np.geomspace(0.5, 50, 200)
    w = Curve(t, np.exp(-2 * np.sqrt(t)), 1, 1e-3 * np.exp(-2 * np.sqrt(t)), {"n_samples": 10**12})
    fit = ms.fit_w_late(w, (1, 50))
    assert fit.b == pytest.approx(2.0, abs=1e-3) and fit.A == pytest.approx(1.0, rel=1e-6)
    np.testing.assert_allclose(fit.alpha.values, 0.5, atol=1e-3)
    fit = ms.fit_w_late(w, (1, 50), alpha_step=0.2)
    np.testing.assert_allclose(fit.alpha.values, 0.5, atol=1e-12)


def test_early_exponential_gives_alpha_one():
    t = np.linspace(0.005, 0.2, 40)
    w = Curve(t, np.exp(-1.214 * t), 1, 1e-6 * np.ones_like(t), {"n_samples": 10**12})
    g, err = ms.early_rate(w, 0.2)
    assert g == pytest.approx(1.214, rel=1e-6)
    np.testing.assert_allclose(ms.fit_w_late(w, (0, 1)).alpha.values, 1.0, atol=1e-6)


def test_simulated_early_rate():
    spec = ms.SimSpec(L=48, t_max=0.2, obs_times=tuple(np.linspace(0.005, 0.2, 40)), master_seed=6, w_bonds="all")
    res = ms.run_ensemble(spec, 20000, chunk=20000)
    g, err = ms.early_rate(ms.w_curve(res), 0.2)
    assert g == pytest.approx(gamma_bar(1.0), rel=0.02)
    assert err < 0.02


def test_w_curve_refuses_censored_times():
    spec = ms.SimSpec(L=8, t_max=1.0, obs_times=(1.0,), w_bonds="all")
    res = ms.run_ensemble(spec, 5)
    with pytest.raises(ValueError):
        ms.w_curve(res, times=[2.0])
