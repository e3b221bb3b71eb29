"""Random-matrix primitives.

Semicircle density and its moments, GUE sampling with the 1/N variance
convention, L-fold convolved densities of states, the single-site SFF
approximation and the ramp/plateau window used near the Heisenberg time.

Energies are dimensionless with unit single-site variance, so the
single-site band is [-2, 2] and an L-site band is [-2L, 2L].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

__all__ = [
    "SpectralDensity",
    "GueSpec",
    "semicircle_density",
    "semicircle_cdf",
    "semicircle_moment",
    "semicircle_nodes",
    "total_density",
    "sample_gue",
    "sample_semicircle_energy",
    "k_window",
    "k1_approx",
    "bessel_j1",
]

RHO_MAX = 1.0 / math.pi


def semicircle_density(eps):
    """Single-site density of states, ``sqrt(4 - eps^2) / (2 pi)`` on [-2, 2]."""
    eps = np.asarray(eps, dtype=float)
    out = np.sqrt(np.clip(4.0 - eps * eps, 0.0, None)) / (2.0 * np.pi)
    return out if out.ndim else float(out)


def semicircle_cdf(eps):
    """Cumulative distribution of the semicircle law."""
    x = np.clip(np.asarray(eps, dtype=float), -2.0, 2.0)
    out = 0.5 + x * np.sqrt(4.0 - x * x) / (4.0 * np.pi) + np.arcsin(x / 2.0) / np.pi
    return out if out.ndim else float(out)


def semicircle_moment(p: int) -> int:
    """Even moment ``int eps^p rho(eps) d eps``, the Catalan number C_{p/2}."""
    if int(p) != p or p < 0 or p % 2:
        raise ValueError(f"moment order must be a non-negative even integer, got {p!r}")
    n = int(p) // 2
    return math.comb(2 * n, n) // (n + 1)


@lru_cache(maxsize=16)
def semicircle_nodes(n: int = 400) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule for expectations over the semicircle law.

    Returns nodes ``x`` in (-2, 2) and weights ``w`` summing to one, exact for
    polynomials of degree below ``2n``.
    """
    theta = np.arange(1, n + 1) * np.pi / (n + 1)
    x = 2.0 * np.cos(theta)
    w = 2.0 / (n + 1) * np.sin(theta) ** 2
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class SpectralDensity:
    """Normalized density of states sampled on a uniform energy grid.

    ``n_sites = 1`` is the semicircle itself; ``n_sites = L`` is the L-fold
    convolution with support [-2L, 2L].
    """

    support_lo: float
    support_hi: float
    grid: np.ndarray
    values: np.ndarray
    n_sites: int
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_spline", CubicSpline(self.grid, self.values, extrapolate=False))

    @property
    def spacing(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def __call__(self, eps):
        eps = np.asarray(eps, dtype=float)
        if self.n_sites == 1:
            return semicircle_density(eps)
        inside = (eps > self.support_lo) & (eps < self.support_hi)
        out = np.zeros_like(eps)
        out[inside] = np.clip(self._spline(eps[inside]), 0.0, None)
        return out if out.ndim else float(out)

    def integrate(self, f=None) -> float:
        """``int f(eps) rho(eps) d eps`` (``f=None`` gives the total mass).

        The single-site density uses its Gauss rule, since the square-root band
        edges spoil grid quadrature; convolved densities vanish smoothly at the
        edges and use the trapezoid rule on the stored grid.
        """
        if self.n_sites == 1:
            x, w = semicircle_nodes(2000)
            return float(np.sum(w) if f is None else np.dot(w, f(x)))
        y = self.values if f is None else self.values * f(self.grid)
        return float(np.trapezoid(y, self.grid))

    def mass(self) -> float:
        return self.integrate()


def _grid_spacing(n_sites: int) -> float:
    return 1e-3 if n_sites <= 4 else 4e-3


def _uniform_grid(half_width: float, step: float) -> np.ndarray:
    n = int(round(2 * half_width / step))
    return np.linspace(-half_width, half_width, n + 1)


def _two_site_value(s: float) -> float:
    # integrand rho(eta) rho(s - eta) = sqrt((b-eta)(eta-a)) * smooth / (4 pi^2)
    s = abs(s)
    if s >= 4.0:
        return 0.0
    a, b = s - 2.0, 2.0
    val, _ = integrate.quad(
        lambda e: math.sqrt((2.0 + e) * (2.0 + s - e)),
        a,
        b,
        weight="alg",
        wvar=(0.5, 0.5),
        epsabs=1e-15,
        epsrel=1e-13,
        limit=200,
    )
    return val / (4.0 * np.pi**2)


def _two_site_moment_table(step: float, power: int) -> tuple[np.ndarray, np.ndarray]:
    """``int eta^power rho(eta) rho(s - eta) d eta`` on a symmetric grid."""
    half = np.linspace(0.0, 4.0, int(round(4.0 / step)) + 1)
    vals = np.empty_like(half)
    for i, s in enumerate(half):
        if s >= 4.0:
            vals[i] = 0.0
            continue
        a = s - 2.0
        vals[i] = integrate.quad(
            lambda e, s=s: math.sqrt((2.0 + e) * (2.0 + s - e)) * e**power,
            a,
            2.0,
            weight="alg",
            wvar=(0.5, 0.5),
            epsabs=1e-15,
            epsrel=1e-13,
            limit=200,
        )[0]
    vals /= 4.0 * np.pi**2
    # eta -> -eta maps s -> -s; even powers give an even function
    sign = 1.0 if power % 2 == 0 else -1.0
    grid = np.concatenate([-half[:0:-1], half])
    full = np.concatenate([sign * vals[:0:-1], vals])
    return grid, full


@lru_cache(maxsize=8)
def two_site_moment_table(power: int, step: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Cached ``(grid, values)`` for ``int eta^power rho(eta) rho(s-eta) d eta``.

    Only even ``power`` is tabulated directly; the odd ones follow from the
    reflection ``eta -> s - eta`` (see :func:`two_site_moment`).
    """
    if power % 2:
        raise ValueError("tabulate even powers only")
    grid, vals = _two_site_moment_table(step, power)
    grid.setflags(write=False)
    vals.setflags(write=False)
    return grid, vals


def two_site_moment(power: int, s):
    """``int eta^p rho(eta) rho(s - eta) d eta`` for ``p`` in 0..3."""
    s = np.asarray(s, dtype=float)
    g0 = total_density(2)(s)
    if power == 0:
        return g0
    if power == 1:
        return 0.5 * s * g0
    g2 = _moment2_spline()(s)
    g2 = np.where(np.abs(s) < 4.0, g2, 0.0)
    if power == 2:
        return g2
    if power == 3:
        # 2 E[z^3] = E[z^3] + E[(s-z)^3] = s^3 - 3 s^2 E[z] + 3 s E[z^2]
        return 0.5 * (-0.5 * s**3 * g0 + 3.0 * s * g2)
    raise ValueError("power must be in 0..3")


@lru_cache(maxsize=1)
def _moment2_spline() -> CubicSpline:
    grid, vals = two_site_moment_table(2)
    return CubicSpline(grid, vals, extrapolate=False)


def _convolve_with_semicircle(prev: SpectralDensity, n_sites: int) -> SpectralDensity:
    step = _grid_spacing(n_sites)
    grid = _uniform_grid(2.0 * n_sites, step)
    nodes, weights = semicircle_nodes(400)
    values = np.zeros_like(grid)
    # chunk the grid to bound the temporary (grid x nodes) array
    for lo in range(0, grid.size, 2048):
        g = grid[lo : lo + 2048, None]
        values[lo : lo + 2048] = prev(g - nodes[None, :]) @ weights
    values = np.clip(values, 0.0, None)
    values[0] = values[-1] = 0.0
    values /= np.trapezoid(values, grid)
    return SpectralDensity(-2.0 * n_sites, 2.0 * n_sites, grid, values, n_sites)


@lru_cache(maxsize=32)
def total_density(L: int) -> SpectralDensity:
    """Density of states of L uncoupled sites (L-fold semicircle convolution).

    The result is cached per ``L`` and treated as read-only afterwards.
    """
    if int(L) != L or L < 1:
        raise ValueError(f"number of sites must be a positive integer, got {L!r}")
    L = int(L)
    if L == 1:
        grid = _uniform_grid(2.0, _grid_spacing(1))
        values = semicircle_density(grid)
        dens = SpectralDensity(-2.0, 2.0, grid, values, 1)
    elif L == 2:
        grid, values = two_site_moment_table(0)
        values = np.array(values)
        values /= np.trapezoid(values, grid)
        dens = SpectralDensity(-4.0, 4.0, np.array(grid), values, 2)
    else:
        dens = _convolve_with_semicircle(total_density(L - 1), L)
    dens.grid.setflags(write=False)
    dens.values.setflags(write=False)
    return dens


@dataclass(frozen=True)
class GueSpec:
    """GUE matrix size and off-diagonal variance ``[|H_ij|^2]_av``."""

    dim: int
    variance_scale: float

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if not self.variance_scale > 0:
            raise ValueError("variance_scale must be positive")

    @classmethod
    def site(cls, N: int) -> "GueSpec":
        """Single-site term, variance 1/N."""
        return cls(N, 1.0 / N)

    @classmethod
    def bond(cls, N: int) -> "GueSpec":
        """Two-site coupling on an N^2-dimensional space, variance 1/N^2."""
        return cls(N * N, 1.0 / (N * N))


def sample_gue(spec: GueSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw a GUE matrix with ``[H_ij H_kl]_av = v delta_il delta_jk``.

    Off-diagonal entries are complex with ``E|H_ij|^2 = v``; diagonal entries
    are real with variance ``v``.
    """
    n = spec.dim
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    # entries of z have E|z|^2 = 2; (z + z^H)/2 has unit off-diagonal variance
    h = (z + z.conj().T) * (0.5 * math.sqrt(spec.variance_scale))
    return h


def sample_semicircle_energy(rng: np.random.Generator, size=None):
    """Rejection sampler for the semicircle law (acceptance rate pi/4)."""
    if size is None:
        while True:
            x = 4.0 * rng.random() - 2.0
            if rng.random() * RHO_MAX < semicircle_density(x):
                return x
    n = int(np.prod(size))
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = int(1.35 * (n - filled)) + 16
        x = 4.0 * rng.random(m) - 2.0
        keep = x[rng.random(m) * RHO_MAX < semicircle_density(x)]
        take = min(keep.size, n - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out.reshape(size)


def k_window(eps, t, N: int):
    """Ramp-plateau window: ``|t|/2pi`` up to ``2 pi N rho(eps)``, then ``N rho``."""
    plateau = N * semicircle_density(eps)
    out = np.minimum(np.abs(np.asarray(t, dtype=float)) / (2.0 * np.pi), plateau)
    return out if np.ndim(out) else float(out)


def bessel_j1(x):
    """Bessel function J_1 (scipy's Cephes implementation, ~1e-15 relative)."""
    return special.j1(x)


def _window_integral(t, N: int):
    """``int k_window(eps, t, N) d eps`` in closed form."""
    t = np.abs(np.asarray(t, dtype=float))
    ratio = np.clip(t / N, 0.0, 2.0)
    # k = t/2pi where sqrt(4 - eps^2) >= t/N, i.e. |eps| <= eps_c
    eps_c = np.sqrt(4.0 - ratio**2)
    ramp = t / (2.0 * np.pi) * 2.0 * eps_c
    tails = 2.0 * N * (1.0 - semicircle_cdf(eps_c))
    return np.where(t >= 2.0 * N, float(N), ramp + tails)


def k1_approx(N: int, t):
    """Single-site SFF: disconnected part plus the integrated ramp-plateau window.

    ``N^2 [J_1(2t)/t]^2 + int k_window(eps, t, N) d eps``, equal to ``N^2`` at
    ``t = 0`` and saturating at ``N`` for ``t >= 2N``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    safe = np.where(t == 0.0, 1.0, t)
    ratio = np.where(t == 0.0, 1.0, bessel_j1(2.0 * safe) / safe)
    out = N**2 * ratio**2 + _window_integral(t, N)
    return out if out.ndim else float(out)
