"""Diffusion-constant estimates, noisy diffusion and the coupled-subsystem SFF model.

* ``d_golden_rule``: leading estimate from the instantaneous energy current.
* ``build_moment_system`` / ``d_moment_matrix``: the four-moment extension,
  linearizing the master equation in ``eps_n``, ``eps_n^3``,
  ``eps_n^2 eps_{n+1}`` and ``eps_n^2 eps_{n-1}``.
* ``noisy_diffusion_sim`` / ``return_enhancement``: the linear fluctuating
  diffusion equation solved mode by mode.
* ``sff_model_kw``: ``K ~ t {[1 - w] + t w}^(L-1)`` and its crossover time.

All rates and diffusion constants are in units of ``lambda^2``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .curves import Curve, SCHEMA_VERSION
from .rmt_core import (
    sample_semicircle_energy,
    semicircle_moment,
    semicircle_nodes,
    total_density,
    two_site_moment,
)

__all__ = [
    "DiffEstimate",
    "MomentSystem",
    "MOMENT_LABELS",
    "d_golden_rule",
    "pair_generator_moments",
    "build_moment_system",
    "d_moment_matrix",
    "generator_oracle",
    "phi_k",
    "return_enhancement",
    "noisy_diffusion_sim",
    "sff_model_kw",
    "crossover_time",
    "fit_crossover_scaling",
    "w_stretched",
    "w_stretched_log",
]

METHODS = ("variance_fit", "collapse_fit", "golden_rule_integral", "moment_matrix")
MOMENT_LABELS = ("e_n", "e_n^3", "e_n^2 e_n+1", "e_n^2 e_n-1")


@dataclass(frozen=True)
class DiffEstimate:
    D_over_lambda2: float
    method: str
    uncertainty: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.D_over_lambda2 > 0:
            raise ValueError("diffusion constant must be positive")


# --- quadrature helpers -------------------------------------------------------

_N_NODES = 500


@lru_cache(maxsize=2)
def _pair_grid(n: int = _N_NODES):
    """Tensor Gauss rule over two independent semicircle energies."""
    x, w = semicircle_nodes(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return X, Y, np.outer(w, w)


@lru_cache(maxsize=2)
def _exchange_kernels(n: int = _N_NODES):
    """``G_j(s) = 2 pi int z^j rho(z) rho(s - z) dz`` on the pair grid, j = 0..3."""
    X, Y, _ = _pair_grid(n)
    S = X + Y
    return {j: 2.0 * np.pi * two_site_moment(j, S) for j in range(4)}


def d_golden_rule(n_nodes: int = _N_NODES) -> DiffEstimate:
    """``(pi/2) int int (e - e')^2 rho(e) rho(e') rho_tot(e + e')``.

    Tensor Gauss-Chebyshev quadrature over the two semicircle weights; the
    two-site density is the tabulated convolution.
    """
    X, Y, W = _pair_grid(n_nodes)
    rho2 = total_density(2)
    val = 0.5 * np.pi * np.sum(W * (X - Y) ** 2 * rho2(X + Y))
    return DiffEstimate(float(val), "golden_rule_integral", 1e-6)


# --- moment system ------------------------------------------------------------

# each basis moment at position n is a map {site offset: power}
_BASIS = (
    {0: 1},
    {0: 3},
    {0: 2, 1: 1},
    {0: 2, -1: 1},
)


def _shift(mono: dict, r: int) -> dict:
    return {s + r: p for s, p in mono.items()}


def _product_moment(powers: dict) -> float:
    out = 1.0
    for p in powers.values():
        if p % 2:
            return 0.0
        out *= semicircle_moment(p)
    return out


def _merged(a: dict, b: dict) -> dict:
    out = dict(a)
    for s, p in b.items():
        out[s] = out.get(s, 0) + p
    return out


def pair_generator_moments(a: int, b: int, a2: int, b2: int, n_nodes: int = _N_NODES) -> float:
    """``E[(L^dag (x^a y^b)) x^a2 y^b2]`` for one bond with energies (x, y).

    ``L^dag f = rate(s) (E[f | s] - f)`` with ``s = x + y``. The gain term uses
    ``rate(s) E[z^a (s-z)^b | s] = int z^a (s-z)^b 2 pi rho(z) rho(s-z) dz``,
    expanded binomially into the kernels ``G_j``.
    """
    X, Y, W = _pair_grid(n_nodes)
    G = _exchange_kernels(n_nodes)
    S = X + Y
    gain = np.zeros_like(S)
    for l in range(b + 1):
        gain += math.comb(b, l) * S ** (b - l) * (-1) ** l * G[a + l]
    gain_term = np.sum(W * X**a2 * Y**b2 * gain)
    loss_term = np.sum(W * X ** (a + a2) * Y ** (b + b2) * G[0])
    return float(gain_term - loss_term)


def _generator_expectation(ci: dict, cj: dict, n_nodes: int) -> float:
    """``E[(L^dag c_i) c_j]`` in the product stationary law."""
    total = 0.0
    sites = set(ci) | set(cj)
    for m in range(min(ci) - 1, max(ci) + 1):
        # only bonds touching c_i change it
        if m not in ci and m + 1 not in ci:
            continue
        rest = {s: ci.get(s, 0) + cj.get(s, 0) for s in sites - {m, m + 1}}
        spectator = _product_moment(rest)
        if spectator == 0.0:
            continue
        total += spectator * pair_generator_moments(
            ci.get(m, 0), ci.get(m + 1, 0), cj.get(m, 0), cj.get(m + 1, 0), n_nodes
        )
    return total


@dataclass
class MomentSystem:
    """Linearized four-moment dynamics at wavenumber ``k``.

    ``A_ij(k) = sum_r e^{ikr} <c_i(r) c_j(0)>`` is the static covariance and
    ``Q_ij(k)`` the same transform of ``<(L^dag c_i)(r) c_j(0)>``; the
    linearized generator is ``G0 = Q A^-1``.
    """

    k: float
    G0: np.ndarray
    A: np.ndarray
    Q: np.ndarray
    labels: tuple = MOMENT_LABELS

    def correlator(self, omega: float = 0.0) -> np.ndarray:
        """``C(k, omega) = (-i omega - G0)^-1 A``."""
        n = self.A.shape[0]
        return np.linalg.solve(-1j * omega * np.eye(n) - self.G0, self.A)

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        n = self.A.shape[0]
        with path.open("w", newline="") as fh:
            fh.write(f"# schema={SCHEMA_VERSION}\n")
            wr = csv.writer(fh)
            wr.writerow(["k", "matrix", "row", "col", "row_label", "col_label", "re", "im"])
            for name, M in (("G0", self.G0), ("A", self.A), ("Q", self.Q)):
                for i in range(n):
                    for j in range(n):
                        v = complex(M[i, j])
                        wr.writerow([repr(self.k), name, i, j, self.labels[i], self.labels[j], repr(v.real), repr(v.imag)])
        return path


@lru_cache(maxsize=4)
def _real_space_tables(n_moments: int, n_nodes: int, r_max: int = 4):
    """``<c_i(r) c_j(0)>`` and ``<(L^dag c_i)(r) c_j(0)>`` for |r| <= r_max."""
    offsets = np.arange(-r_max, r_max + 1)
    A = np.zeros((n_moments, n_moments, offsets.size))
    Q = np.zeros_like(A)
    for i in range(n_moments):
        for j in range(n_moments):
            for ir, r in enumerate(offsets):
                ci, cj = _shift(_BASIS[i], int(r)), _BASIS[j]
                A[i, j, ir] = _product_moment(_merged(ci, cj))
                Q[i, j, ir] = _generator_expectation(ci, cj, n_nodes)
    for a in (A, Q):
        a.setflags(write=False)
    return offsets, A, Q


def real_space_tables(n_moments: int = 4, n_nodes: int = _N_NODES):
    """Offsets ``r`` with the real-space covariance and generator tables."""
    return _real_space_tables(n_moments, n_nodes)


def build_moment_system(k: float, n_moments: int = 4, n_nodes: int = _N_NODES) -> MomentSystem:
    """Linearized generator in the moment basis at wavenumber ``k``.

    ``n_moments=1`` keeps only ``eps_n`` and reproduces the golden-rule value.
    """
    if n_moments not in (1, 4):
        raise ValueError("n_moments must be 1 or 4")
    offsets, Ar, Qr = _real_space_tables(n_moments, n_nodes)
    phase = np.exp(1j * k * offsets)
    A = Ar @ phase
    Q = Qr @ phase
    G0 = np.linalg.solve(A.T, Q.T).T  # Q A^-1
    return MomentSystem(float(k), G0, A, Q, MOMENT_LABELS[:n_moments])


def _d_at(k: float, n_moments: int, n_nodes: int) -> float:
    C = build_moment_system(k, n_moments, n_nodes).correlator(0.0)
    return float((1.0 / (k * k * C[0, 0])).real)


def d_moment_matrix(
    ks=(0.02, 0.01, 0.005), n_moments: int = 4, n_nodes: int = _N_NODES, return_steps: bool = False
):
    """``lim_{k->0} 1 / (k^2 C_11(k, 0))`` by Richardson extrapolation.

    The zero-frequency limit is taken first at each fixed ``k``. ``D(k)`` is
    even in ``k``, so successive halvings remove the ``k^2`` and ``k^4``
    corrections. The uncertainty is the size of the last correction.
    """
    ks = np.asarray(ks, dtype=float)
    if np.any(ks <= 0):
        raise ValueError("wavenumbers must be positive (k = 0 is the zero mode)")
    vals = np.array([_d_at(k, n_moments, n_nodes) for k in ks])
    # Neville table in the variable k^2
    table = [vals]
    h = ks**2
    for level in range(1, ks.size):
        prev = table[-1]
        nxt = (h[level:] * prev[:-1] - h[: ks.size - level] * prev[1:]) / (h[level:] - h[: ks.size - level])
        table.append(nxt)
    best = float(table[-1][0])
    err = float(abs(best - table[-2][-1])) if ks.size > 1 else 0.0
    est = DiffEstimate(best, "moment_matrix", err)
    if return_steps:
        return est, dict(zip(ks.tolist(), vals.tolist()))
    return est


def generator_oracle(n_samples: int, rng: np.random.Generator, n_moments: int = 4, r_max: int = 4, chunk: int = 200_000):
    """Monte Carlo estimate of ``<(L^dag c_i)(r) c_j(0)>`` from actual moves.

    Draws product-law configurations, fires every bond once with the
    stochastic pair update and weights the change in ``c_i`` by the bond rate.
    This is the zero-time slope of the linear response to a small tilt
    ``beta c_j`` of the initial law, measured without any quadrature.

    Returns ``(offsets, mean, stderr)`` with arrays shaped like
    :func:`real_space_tables`.
    """
    from .master_sim import pair_rate

    offsets = np.arange(-r_max, r_max + 1)
    lo_site, hi_site = -r_max - 2, r_max + 2
    n_sites = hi_site - lo_site + 1
    shape = (n_moments, n_moments, offsets.size)
    total = np.zeros(shape)
    total_sq = np.zeros(shape)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        e = sample_semicircle_energy(rng, (m, n_sites))
        col = lambda s: s - lo_site  # noqa: E731
        cj = [np.prod([e[:, col(s)] ** p for s, p in _BASIS[j].items()], axis=0) for j in range(n_moments)]
        acc = np.zeros((m,) + shape)
        for bond in range(lo_site, hi_site):
            left, right = e[:, col(bond)], e[:, col(bond + 1)]
            s = left + right
            rate = pair_rate(s)
            new_left = _vector_pair_update(s, rng)
            new = e.copy()
            new[:, col(bond)] = new_left
            new[:, col(bond + 1)] = s - new_left
            for i in range(n_moments):
                for ir, r in enumerate(offsets):
                    mono = _shift(_BASIS[i], int(r))
                    if bond not in mono and bond + 1 not in mono:
                        continue
                    if min(mono) < lo_site or max(mono) > hi_site:
                        continue
                    before = np.prod([e[:, col(q)] ** p for q, p in mono.items()], axis=0)
                    after = np.prod([new[:, col(q)] ** p for q, p in mono.items()], axis=0)
                    d = rate * (after - before)
                    for j in range(n_moments):
                        acc[:, i, j, ir] += d * cj[j]
        total += acc.sum(axis=0)
        total_sq += (acc**2).sum(axis=0)
        done += m
    mean = total / n_samples
    var = np.maximum(total_sq / n_samples - mean**2, 0.0)
    return offsets, mean, np.sqrt(var / n_samples)


def _vector_pair_update(s: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorized draw from ``rho(x) rho(s - x)`` for each pair energy ``s``."""
    lo = np.maximum(-2.0, s - 2.0)
    hi = np.minimum(2.0, s + 2.0)
    env = (4.0 - 0.25 * s * s) / (4.0 * np.pi**2)
    out = np.empty_like(s)
    todo = np.arange(s.size)
    while todo.size:
        x = lo[todo] + (hi[todo] - lo[todo]) * rng.random(todo.size)
        y = s[todo] - x
        dens = np.sqrt(np.clip((4 - x * x) * (4 - y * y), 0, None)) / (4.0 * np.pi**2)
        ok = rng.random(todo.size) * env[todo] < dens
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


# --- noisy diffusion ------------------------------------------------------------


def phi_k(k, t, D: float):
    """``1 - exp(-2 D (1 - cos k) t)``."""
    if D <= 0:
        raise ValueError("D must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    out = -np.expm1(-2.0 * D * (1.0 - np.cos(k)) * t)
    return out if np.ndim(out) else float(out)


def _check_odd(L: int) -> int:
    if int(L) != L or L < 3 or L % 2 == 0:
        raise ValueError(f"L must be an odd integer >= 3, got {L!r}")
    return int(L) // 2


@dataclass
class Enhancement:
    """Return-probability enhancement and its large-time asymptotics."""

    value: float
    asymptotic: float  # sum_K exp(-4 pi^2 K^2 D t / L^2)
    asymptotic_lattice: float  # same with the lattice rate 2D(1 - cos k)
    diagnostic: str = ""


def return_enhancement(L: int, D: float, t: float, n_terms: int = 100) -> Enhancement:
    """``prod_{K=1..K_max} 1/phi_{2 pi K / L}(t)`` for an odd ring of L sites.

    At ``t = 0`` (every ``phi_k = 0``) the enhancement is ``+inf`` with a
    diagnostic instead of an error.
    """
    k_max = _check_odd(L)
    if t < 0:
        raise ValueError("t must be non-negative")
    K = np.arange(1, k_max + 1)
    phis = phi_k(2.0 * np.pi * K / L, t, D)
    Kinf = np.arange(1, n_terms + 1)
    asym = float(np.sum(np.exp(-4.0 * np.pi**2 * Kinf**2 * D * t / L**2)))
    asym_lat = float(np.sum(np.exp(-2.0 * D * (1.0 - np.cos(2.0 * np.pi * K / L)) * t)))
    if np.any(phis == 0.0):
        return Enhancement(math.inf, asym, asym_lat, "some phi_k vanish at this time")
    value = float(np.exp(-np.sum(np.log(phis))))
    return Enhancement(value, asym, asym_lat)


def enhancement_excess(L: int, D: float, t: float) -> float:
    """``prod 1/phi_k - 1`` computed without cancellation.

    Works with ``ln phi_k = log1p(-exp(-r_k t))`` directly, so the excess
    stays accurate after ``phi_k`` itself has rounded to one.
    """
    k_max = _check_odd(L)
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return math.inf
    K = np.arange(1, k_max + 1)
    rt = 2.0 * D * (1.0 - np.cos(2.0 * np.pi * K / L)) * t
    return float(np.expm1(-np.sum(np.log1p(-np.exp(-rt)))))


def noisy_diffusion_sim(L: int, D: float, mu: float, t_grid, n_samples: int, rng: np.random.Generator) -> Curve:
    """Sample the fluctuating diffusion equation on an odd ring, mode by mode.

    Each Fourier mode is a complex Ornstein-Uhlenbeck process relaxing at
    ``r_k = 2D(1 - cos k)`` with noise strength ``2 mu (1 - cos k)`` (the
    noise enters as a lattice divergence, so the k = 0 mode is frozen). It
    starts from its stationary Gaussian of variance ``mu / 2D`` and is
    advanced exactly between grid times.

    Returns a curve over ``(t, K)`` for ``K = 0..K_max`` with the measured
    ``E|e_k(t) - e_k(0)|^2`` and its standard error; the prediction is in
    ``metadata["predicted"]``.
    """
    k_max = _check_odd(L)
    if D <= 0 or mu <= 0:
        raise ValueError("D and mu must be positive")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0) or t_grid[0] <= 0:
        raise ValueError("t_grid must be positive and increasing")
    K = np.arange(0, k_max + 1)
    k = 2.0 * np.pi * K / L
    rate = 2.0 * D * (1.0 - np.cos(k))
    stat_var = np.where(K == 0, 0.0, mu / (2.0 * D))

    def cgauss(shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)

    # the k = 0 mode starts anywhere; it never moves
    e0 = cgauss((n_samples, K.size)) * np.sqrt(np.where(K == 0, 1.0, stat_var))
    e = e0.copy()
    means = np.zeros((t_grid.size, K.size))
    errs = np.zeros_like(means)
    t_prev = 0.0
    for it, t in enumerate(t_grid):
        decay = np.exp(-rate * (t - t_prev))
        e = decay * e + np.sqrt(stat_var * (1.0 - decay**2)) * cgauss(e.shape)
        d2 = np.abs(e - e0) ** 2
        means[it] = d2.mean(axis=0)
        errs[it] = d2.std(axis=0, ddof=1) / math.sqrt(n_samples)
        t_prev = t
    pred = (mu / D) * phi_k(k[None, :], t_grid[:, None], D)
    return Curve(t_grid, means, n_samples, errs, {"L": L, "D": D, "mu": mu, "predicted": pred}, ("K",), (K,))


# --- coupled-subsystem SFF model --------------------------------------------------


def w_stretched(tau, A: float, b: float):
    """``min(1, A exp(-b sqrt(tau)))``."""
    tau = np.asarray(tau, dtype=float)
    return np.minimum(1.0, A * np.exp(-b * np.sqrt(tau)))


def w_stretched_log(tau, A: float, D: float, kappa: float = 1.5):
    """Late-time form keeping the logarithm: ``A exp(-(kappa/4) sqrt(D tau) ln tau)``."""
    tau = np.asarray(tau, dtype=float)
    arg = 0.25 * kappa * np.sqrt(D * tau) * np.log(np.maximum(tau, 1.0))
    return np.minimum(1.0, A * np.exp(-arg))


def sff_model_kw(t_grid, L: int, w, lam: float = 0.1, prefactor_mode: str = "unit", log_values: bool = False) -> Curve:
    """``K(t) = c t {[1 - w(t)] + t w(t)}^(L-1)``.

    ``w`` is a :class:`Curve` sampled on ``t_grid`` (in rescaled time
    ``lambda^2 t``), an array on the grid, or a callable of rescaled time.
    ``t_grid`` is physical time. ``prefactor_mode="match_late_ramp"`` sets
    ``c = 2L/pi`` so the ``w -> 0`` limit is the ramp ``(2L/pi) t``.
    With ``log_values`` the curve holds ``ln K``, which stays finite for large L.
    """
    t = np.asarray(t_grid, dtype=float)
    tau = lam**2 * t
    if isinstance(w, Curve):
        if w.times.size != t.size or not np.allclose(w.times, tau):
            wv = np.interp(tau, w.times, w.values)
        else:
            wv = np.asarray(w.values, dtype=float)
    elif callable(w):
        wv = np.asarray(w(tau), dtype=float)
    else:
        wv = np.broadcast_to(np.asarray(w, dtype=float), t.shape)
    if np.any(wv < 0) or np.any(wv > 1):
        raise ValueError("w must lie in [0, 1]")
    if prefactor_mode == "unit":
        c = 1.0
    elif prefactor_mode == "match_late_ramp":
        c = 2.0 * L / np.pi
    else:
        raise ValueError(f"unknown prefactor_mode {prefactor_mode!r}")
    meta = {"L": L, "lambda": lam, "prefactor_mode": prefactor_mode, "log_values": log_values}
    if log_values:
        lnK = math.log(c) + np.log(t) + (L - 1) * np.log1p(wv * (t - 1.0))
        return Curve(t, lnK, 1, None, meta)
    K = c * t * ((1.0 - wv) + t * wv) ** (L - 1)
    return Curve(t, K, 1, None, meta)


def crossover_time(L: int, A: float, b: float, lam: float = 0.1) -> float:
    """Late solution of ``L t w(lambda^2 t) = 1`` with ``w = A exp(-b sqrt(tau))``.

    Returns physical time ``t*``. Works in ``u = ln t``, where the condition
    reads ``ln L + u + ln A - b lam e^(u/2) = 0``; the left side is concave
    with a single maximum and the crossover is the root beyond it.
    """
    from scipy.optimize import brentq

    if A <= 0 or b <= 0 or lam <= 0:
        raise ValueError("A, b and lam must be positive")
    f = lambda u: math.log(L) + u + math.log(A) - b * lam * math.exp(0.5 * u)  # noqa: E731
    u_peak = 2.0 * math.log(2.0 / (b * lam))
    if f(u_peak) <= 0:
        raise ValueError("L t w(t) never reaches 1; no crossover")
    hi = u_peak + 1.0
    while f(hi) > 0:
        hi += 2.0 * (hi - u_peak)
    return math.exp(brentq(f, u_peak, hi, xtol=1e-14, rtol=1e-14))


@dataclass
class CrossoverFit:
    Ls: np.ndarray
    t_star: np.ndarray
    a: float
    c: float
    rms_rel_residual: float
    max_rel_residual: float


def fit_crossover_scaling(A: float, b: float, lam: float = 0.1, Ls=tuple(2**n for n in range(3, 11))) -> CrossoverFit:
    """Fit ``t*(L) = a + c (ln L)^2`` and report relative residuals."""
    Ls = np.asarray(Ls, dtype=float)
    ts = np.array([crossover_time(int(L), A, b, lam) for L in Ls])
    X = np.column_stack([np.ones_like(Ls), np.log(Ls) ** 2])
    coef, *_ = np.linalg.lstsq(X, ts, rcond=None)
    rel = (X @ coef - ts) / ts
    return CrossoverFit(Ls, ts, float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(rel**2))), float(np.max(np.abs(rel))))
