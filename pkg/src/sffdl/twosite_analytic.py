"""Closed-form predictions for two coupled random-matrix sites.

The pair exchanges energy at rate ``gamma(s) = 2 pi lambda^2 rho_tot(s)``
(``s`` the pair energy), after which the split is redrawn from its
equilibrium law. Everything below follows from that solution: the energy
autocorrelator, the two SFF contributions and the ramp-to-plateau crossover.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .curves import Curve
from .rmt_core import k1_approx, k_window, semicircle_density, total_density, two_site_moment

__all__ = [
    "TwoSiteParams",
    "gamma",
    "gamma_bar",
    "transfer_distribution",
    "no_exchange_weight",
    "c11_pred",
    "c12_pred",
    "c11_limit",
    "k1_eq47",
    "k1_contribution",
    "k2_contribution",
    "k_two_site_curve",
    "k_tot_crossover",
]


@dataclass(frozen=True)
class TwoSiteParams:
    N: int
    lam: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not (1.0 / self.N < self.lam < self.N ** -0.25):
            warnings.warn(
                f"lambda={self.lam} is outside 1/N << lambda << N^(-1/4) for N={self.N}",
                RuntimeWarning,
                stacklevel=2,
            )


def gamma(eps_tot, lam: float):
    """Exchange rate ``2 pi lambda^2 rho_tot(eps_tot)``."""
    return 2.0 * np.pi * lam**2 * total_density(2)(eps_tot)


@lru_cache(maxsize=4)
def _half_band_rule(n: int = 2000):
    """Gauss-Legendre nodes on [0, 4]; integrands here are even in energy."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 2.0 * (x + 1.0), 2.0 * w


def _band_integral(f, n: int = 2000):
    """``int_{-4}^{4} f(e) de`` for even ``f`` vectorized over a trailing axis."""
    x, w = _half_band_rule(n)
    return 2.0 * np.tensordot(f(x), w, axes=([-1], [0]))


def gamma_bar(lam: float) -> float:
    """Mean rate over the two-site density: ``2 pi lam^2 int rho_tot^2``."""
    rho2 = total_density(2)
    return float(_band_integral(lambda e: 2.0 * np.pi * lam**2 * rho2(e) ** 2))


def no_exchange_weight(eps_tot, lam: float, t):
    """Weight ``exp(-gamma t)`` of the no-transfer delta peak."""
    return np.exp(-gamma(eps_tot, lam) * np.asarray(t, dtype=float))


def transfer_distribution(omega, e1p: float, e2p: float, lam: float, t):
    """Smooth part of the transferred-energy density at time ``t``.

    ``M_inf(omega) (1 - exp(-gamma t))`` with
    ``M_inf = rho(e1p - omega) rho(e2p + omega) / rho_tot(e1p + e2p)``.
    At a band edge of the pair energy the smooth part is zero.
    """
    s = e1p + e2p
    rt = total_density(2)(s)
    omega = np.asarray(omega, dtype=float)
    if rt <= 0:
        return np.zeros_like(omega)
    m_inf = semicircle_density(e1p - omega) * semicircle_density(e2p + omega) / rt
    return m_inf * (1.0 - no_exchange_weight(s, lam, t))


def c11_limit() -> float:
    """Long-time value ``int B(e) de`` with ``B = [int eta rho rho]^2 / rho_tot``.

    Since ``int eta rho(eta) rho(e - eta) = (e/2) rho_tot(e)``, this is
    ``int e^2 rho_tot / 4 = 1/2``; evaluated by quadrature here.
    """
    rho2 = total_density(2)

    def B(e):
        m1 = two_site_moment(1, e)
        r = rho2(e)
        return np.divide(m1 * m1, r, out=np.zeros_like(r), where=r > 0)

    return float(_band_integral(B))


def c11_pred(t, lam: float):
    """Same-site energy autocorrelator of the two-site model.

    ``int S2 e^{-gamma t} + int B (1 - e^{-gamma t})`` with
    ``S2(e) = int eta^2 rho(eta) rho(e - eta)``.
    """
    t = np.asarray(t, dtype=float)
    rho2 = total_density(2)

    def integrand(e):
        g = 2.0 * np.pi * lam**2 * rho2(e)
        decay = np.exp(-np.multiply.outer(t, g))
        s2 = two_site_moment(2, e)
        b = 0.25 * e * e * rho2(e)
        return s2 * decay + b * (1.0 - decay)

    out = _band_integral(integrand)
    return out if out.ndim else float(out)


def c12_pred(t, lam: float):
    return 1.0 - c11_pred(t, lam)


def k1_eq47(t, lam: float):
    """``(t/2pi)^2 int int e^{-gamma(e1 + e2) t}`` over the square [-2, 2]^2.

    The pair-energy marginal of the uniform square is the triangle ``4 - |s|``.
    """
    t = np.asarray(t, dtype=float)
    rho2 = total_density(2)

    def integrand(s):
        g = 2.0 * np.pi * lam**2 * rho2(s)
        return (4.0 - s) * np.exp(-np.multiply.outer(t, g))

    out = (t / (2.0 * np.pi)) ** 2 * _band_integral(integrand)
    return out if out.ndim else float(out)


@lru_cache(maxsize=8)
def _legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def _window_rule(eps_c: float, n: int):
    """Nodes/weights on [-2, 2] split at the window kinks ``+-eps_c``.

    The outer pieces carry a square-root edge and use ``e = +-(2 - u^2)``.
    """
    x, w = _legendre(n)
    nodes, weights = [], []
    if eps_c > 0:
        a, b = -eps_c, eps_c
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    if eps_c < 2.0:
        # u in [0, sqrt(2 - eps_c)], e = 2 - u^2, de = 2u du
        umax = math.sqrt(2.0 - eps_c)
        u = 0.5 * umax * (x + 1.0)
        wu = 0.5 * umax * w * 2.0 * u
        nodes += [2.0 - u * u, -(2.0 - u * u)]
        weights += [wu, wu]
    return np.concatenate(nodes), np.concatenate(weights)


def k1_contribution(t, params: TwoSiteParams, n: int = 96):
    """``int int k(e1, t) k(e2, t) exp(-gamma(e1 + e2) t)`` over [-2, 2]^2.

    ``k`` is the single-site ramp/plateau window. For ``t << N`` it is flat at
    ``t/2pi`` and this reduces to :func:`k1_eq47`.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    rho2 = total_density(2)
    out = np.empty_like(ts)
    for i, ti in enumerate(ts):
        ratio = min(ti / params.N, 2.0)
        eps_c = math.sqrt(4.0 - ratio * ratio)
        x, w = _window_rule(eps_c, n)
        kw = w * k_window(x, ti, params.N)
        g = 2.0 * np.pi * params.lam**2 * rho2(x[:, None] + x[None, :])
        out[i] = kw @ np.exp(-g * ti) @ kw
    return out if np.ndim(t) else float(out[0])


def k2_contribution(t, lam: float):
    """``(t/2pi) int [1 - exp(-gamma(e) t)] de`` over [-4, 4]."""
    t = np.asarray(t, dtype=float)
    rho2 = total_density(2)

    def integrand(e):
        g = 2.0 * np.pi * lam**2 * rho2(e)
        return -np.expm1(-np.multiply.outer(t, g))

    out = t / (2.0 * np.pi) * _band_integral(integrand)
    return out if out.ndim else float(out)


@lru_cache(maxsize=1)
def _rho2_half_cdf():
    """Grid on [0, 4] with ``rho_tot`` and ``int_e^4 rho_tot`` (tail mass)."""
    from scipy.integrate import cumulative_trapezoid

    d = total_density(2)
    keep = d.grid >= 0
    g, v = d.grid[keep], d.values[keep]
    tail = cumulative_trapezoid(v[::-1], -g[::-1], initial=0.0)[::-1]
    # normalize the half mass to exactly 1/2 as in the stored density
    tail *= 0.5 / tail[0]
    return g, v, tail


def k_tot_crossover(times, N: int) -> Curve:
    """Ramp-to-plateau interpolation ``int min(t/2pi, N^2 rho_tot(e)) de``."""
    t = np.asarray(times, dtype=float)
    g, v, tail = _rho2_half_cdf()
    vmax = v[0]
    # rho_tot decreases on [0, 4]; e*(t) solves 2 pi N^2 rho_tot(e*) = t
    level = t / (2.0 * np.pi * N**2)
    e_star = np.interp(-level, -v, g, left=0.0, right=4.0)
    tail_star = np.interp(e_star, g, tail)
    ramp = t / (2.0 * np.pi) * 2.0 * e_star + 2.0 * N**2 * tail_star
    K = np.where(level >= vmax, float(N**2), ramp)
    return Curve(t, K, 1, None, {"N": N, "kind": "crossover", "valid": "lambda^2 t >> 1"})


def k_two_site_curve(times, params: TwoSiteParams) -> dict[str, Curve]:
    """The three analytic SFF curves, each tagged with its validity window.

    ``early``: square of the single-site SFF (``lambda^2 t << 1``);
    ``late``: K1 + K2 (``t >> sqrt(N)``);
    ``crossover``: the ramp-plateau form (``lambda^2 t >> 1``).
    """
    t = np.asarray(times, dtype=float)
    meta = {"N": params.N, "lambda": params.lam}
    early = Curve(t, k1_approx(params.N, t) ** 2, 1, None, {**meta, "kind": "early", "valid": "lambda^2 t << 1"})
    late_vals = k1_contribution(t, params) + k2_contribution(t, params.lam)
    late = Curve(t, late_vals, 1, None, {**meta, "kind": "late", "valid": "t >> N^(1/2)"})
    cross = k_tot_crossover(t, params.N)
    cross.metadata.update(meta)
    return {"early": early, "late": late, "crossover": cross}
