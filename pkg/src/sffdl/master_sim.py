"""Stochastic simulation of the energy-exchange master equation.

A chain of L sites carries energies drawn from the semicircle law. Bond
``m`` (sites m, m+1) fires at rate ``2 pi lambda^2 rho_tot(eps_m + eps_{m+1})``
and redistributes the pair energy with weight ``rho(x) rho(s - x)``. Time is
measured as ``tau = lambda^2 t`` throughout, so ``lambda`` drops out.

The heavy lifting is in :mod:`sffdl._kernels`; this module holds the data
types, a pure-numpy reference implementation of the elementary moves, the
ensemble driver and the observables built from its accumulators.
"""
from __future__ import annotations

import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, special

from . import _kernels
from .curves import Curve, mean_and_stderr
from .rmt_core import sample_semicircle_energy, semicircle_density, total_density
from .seeding import MASK64, kind_code

__all__ = [
    "EnergyConfig",
    "SimSpec",
    "TrajectoryLog",
    "EnsembleResult",
    "init_config",
    "select_bond",
    "sample_waiting_time",
    "sample_pair_update",
    "run_trajectory",
    "run_ensemble",
    "autocorrelator",
    "collapse_check",
    "d_of_t",
    "w_curve",
    "fit_w_late",
    "early_rate",
    "save_checkpoint",
    "load_checkpoint",
]

TRAJECTORY_KIND = "master_sim/trajectory"
DRIFT_LIMIT = 1e-10


# --- rate table -----------------------------------------------------------


def _rate_table():
    """Spline coefficients of rho_tot for two sites, in kernel layout."""
    dens = total_density(2)
    spline = dens._spline
    coef = np.ascontiguousarray(spline.c, dtype=float)
    lo = float(dens.grid[0])
    return lo, 1.0 / dens.spacing, coef


def pair_rate(total):
    """Exchange rate of a bond with pair energy ``total`` (units of lambda^2)."""
    return 2.0 * np.pi * total_density(2)(total)


# --- configuration and elementary moves ------------------------------------


@dataclass
class EnergyConfig:
    """Site energies plus cached bond rates."""

    energies: np.ndarray
    boundary: str = "open"
    rates: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")
        self.energies = np.asarray(self.energies, dtype=float).copy()
        if self.energies.size < 2:
            raise ValueError("need at least two sites")
        self.rates = pair_rate(self.pair_sums())

    @property
    def L(self) -> int:
        return self.energies.size

    @property
    def n_bonds(self) -> int:
        return self.L if self.boundary == "periodic" else self.L - 1

    @property
    def total_rate(self) -> float:
        return float(self.rates.sum())

    def right_of(self, m: int) -> int:
        return (m + 1) % self.L

    def pair_sums(self) -> np.ndarray:
        e = self.energies
        if self.boundary == "periodic":
            return e + np.roll(e, -1)
        return e[:-1] + e[1:]

    def apply(self, m: int, new_left: float) -> None:
        """Set site ``m`` to ``new_left`` keeping the bond's pair energy."""
        r = self.right_of(m)
        s = self.energies[m] + self.energies[r]
        self.energies[m] = new_left
        self.energies[r] = s - new_left
        self.rates = pair_rate(self.pair_sums())


def init_config(L: int, rng: np.random.Generator, boundary: str = "open") -> EnergyConfig:
    """Infinite-temperature initial state: i.i.d. semicircle energies."""
    return EnergyConfig(sample_semicircle_energy(rng, L), boundary)


def select_bond(config: EnergyConfig, rng: np.random.Generator) -> int:
    """Pick a bond with probability proportional to its rate."""
    total = config.total_rate
    if total <= 0:
        raise ValueError("no bond can fire")
    return int(np.searchsorted(np.cumsum(config.rates), rng.random() * total, side="right"))


def sample_waiting_time(config: EnergyConfig, rng: np.random.Generator) -> float:
    return float(rng.exponential(1.0 / config.total_rate))


def sample_pair_update(e1: float, e2: float, rng: np.random.Generator) -> tuple[float, float]:
    """New pair energies drawn from ``rho(x) rho(s - x)`` at fixed sum ``s``."""
    s = e1 + e2
    if abs(s) >= 4.0:
        raise ValueError("pair energy outside the two-site band")
    lo, hi = max(-2.0, s - 2.0), min(2.0, s + 2.0)
    env = semicircle_density(0.5 * s) ** 2
    while True:
        x = lo + (hi - lo) * rng.random()
        if rng.random() * env < semicircle_density(x) * semicircle_density(s - x):
            return x, s - x


# --- specs and results ----------------------------------------------------


@dataclass(frozen=True)
class SimSpec:
    """Ensemble parameters. Times are in units of ``1/lambda^2``."""

    L: int = 48
    boundary: str = "open"
    t_max: float = 100.0
    obs_times: tuple = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)
    n_trajectories: int = 10_000
    master_seed: int = 0
    origins: tuple | None = None  # default: the central site
    w_bonds: tuple | str = "center"

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("L must be at least 2")
        if self.boundary not in ("open", "periodic"):
            raise ValueError("boundary must be 'open' or 'periodic'")
        obs = np.asarray(self.obs_times, dtype=float)
        if obs.size and (np.any(np.diff(obs) <= 0) or obs[0] <= 0 or obs[-1] > self.t_max):
            raise ValueError("obs_times must be increasing within (0, t_max]")
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be positive")

    @property
    def n_bonds(self) -> int:
        return self.L if self.boundary == "periodic" else self.L - 1

    def origin_sites(self) -> np.ndarray:
        if self.origins is None:
            return np.array([self.L // 2], dtype=np.int64)
        o = np.asarray(self.origins, dtype=np.int64)
        if o.size == 0 or o.min() < 0 or o.max() >= self.L:
            raise ValueError("origins must be sites of the chain")
        return o

    def tracked_bonds(self) -> np.ndarray:
        w = self.w_bonds
        if isinstance(w, str):
            if w == "center":
                return np.array([(self.L - 1) // 2], dtype=np.int64)
            if w == "all":
                return np.arange(self.n_bonds, dtype=np.int64)
            if w == "none":
                return np.zeros(0, dtype=np.int64)
            raise ValueError(f"unknown w_bonds {w!r}")
        b = np.asarray(w, dtype=np.int64)
        if b.size and (b.min() < 0 or b.max() >= self.n_bonds):
            raise ValueError("w_bonds out of range")
        return b


@dataclass
class TrajectoryLog:
    """One trajectory: initial/final energies, every event and snapshots."""

    initial: np.ndarray
    final: np.ndarray
    event_times: np.ndarray
    event_bonds: np.ndarray
    before: np.ndarray
    after: np.ndarray
    obs_times: np.ndarray
    snapshots: np.ndarray

    @property
    def n_events(self) -> int:
        return self.event_times.size

    def first_exchange(self, bond: int) -> float:
        hit = np.flatnonzero(self.event_bonds == bond)
        return float(self.event_times[hit[0]]) if hit.size else math.inf


@dataclass
class EnsembleResult:
    """Accumulated sums over an ensemble of trajectories."""

    spec: SimSpec
    n: int
    corr_sum: np.ndarray
    corr_sq: np.ndarray
    n_valid: np.ndarray
    var_sum: np.ndarray
    var_sq: np.ndarray
    rule_sum: np.ndarray
    rule_sq: np.ndarray
    first_exchange: np.ndarray
    events: int
    max_drift: float
    aborted: int = 0
    snapshots: np.ndarray | None = None

    @property
    def obs_times(self) -> np.ndarray:
        return np.asarray(self.spec.obs_times, dtype=float)

    @property
    def displacements(self) -> np.ndarray:
        return np.arange(-self.spec.L + 1, self.spec.L)

    def merge(self, other: "EnsembleResult") -> "EnsembleResult":
        snaps = None
        if self.snapshots is not None and other.snapshots is not None:
            snaps = np.concatenate([self.snapshots, other.snapshots])
        return EnsembleResult(
            self.spec,
            self.n + other.n,
            self.corr_sum + other.corr_sum,
            self.corr_sq + other.corr_sq,
            self.n_valid,
            self.var_sum + other.var_sum,
            self.var_sq + other.var_sq,
            self.rule_sum + other.rule_sum,
            self.rule_sq + other.rule_sq,
            np.concatenate([self.first_exchange, other.first_exchange]),
            self.events + other.events,
            max(self.max_drift, other.max_drift),
            self.aborted + other.aborted,
            snaps,
        )


def _seed64(master_seed: int) -> np.uint64:
    return np.uint64(int(master_seed) & MASK64)


def run_trajectory(spec: SimSpec, trajectory_id: int = 0) -> TrajectoryLog:
    """Replay trajectory ``trajectory_id`` of the ensemble with a full event log."""
    lo, inv_h, coef = _rate_table()
    obs = np.asarray(spec.obs_times, dtype=float)
    out = _kernels.run_logged(
        spec.L,
        spec.boundary == "periodic",
        float(spec.t_max),
        obs,
        _seed64(spec.master_seed),
        np.uint64(kind_code(TRAJECTORY_KIND)),
        int(trajectory_id),
        lo,
        inv_h,
        coef,
    )
    return TrajectoryLog(*out[:6], obs, out[6])


def _run_chunk(spec: SimSpec, first_id: int, count: int, snapshots: bool) -> EnsembleResult:
    lo, inv_h, coef = _rate_table()
    out = _kernels.run_batch(
        spec.L,
        spec.boundary == "periodic",
        float(spec.t_max),
        np.asarray(spec.obs_times, dtype=float),
        _seed64(spec.master_seed),
        np.uint64(kind_code(TRAJECTORY_KIND)),
        int(first_id),
        int(count),
        spec.origin_sites(),
        spec.tracked_bonds(),
        lo,
        inv_h,
        coef,
        bool(snapshots),
    )
    (cs, cq, nv, vs, vq, rs, rq, fe, ev, drift, aborted, snaps) = out
    return EnsembleResult(
        spec, count, cs, cq, nv, vs, vq, rs, rq, fe, int(ev.sum()), float(drift), int(aborted),
        snaps if snapshots else None,
    )


def run_ensemble(
    spec: SimSpec,
    n_trajectories: int | None = None,
    first_id: int = 0,
    chunk: int = 2000,
    workers: int = 1,
    snapshots: bool = False,
    progress=None,
) -> EnsembleResult:
    """Simulate ``n_trajectories`` trajectories and accumulate observables.

    Trajectory ``k`` always uses the stream keyed by ``(master_seed, k)``, so
    chunking and the worker count change nothing but floating-point summation
    order.
    """
    n = spec.n_trajectories if n_trajectories is None else int(n_trajectories)
    starts = list(range(first_id, first_id + n, chunk))
    sizes = [min(chunk, first_id + n - s) for s in starts]
    result = None
    if workers > 1 and len(starts) > 1:
        with ProcessPoolExecutor(workers) as pool:
            futs = [pool.submit(_run_chunk, spec, s, c, snapshots) for s, c in zip(starts, sizes)]
            for f in futs:
                part = f.result()
                result = part if result is None else result.merge(part)
                if progress:
                    progress(result.n, n)
    else:
        for s, c in zip(starts, sizes):
            part = _run_chunk(spec, s, c, snapshots)
            result = part if result is None else result.merge(part)
            if progress:
                progress(result.n, n)
    if result.max_drift > DRIFT_LIMIT:
        raise FloatingPointError(f"energy drift {result.max_drift:.3g} exceeds {DRIFT_LIMIT}")
    return result


# --- observables ------------------------------------------------------------


def autocorrelator(result: EnsembleResult, x_max: int | None = None) -> Curve:
    """``C_{0x}(t) = [eps_0(0) eps_x(t)]_av`` against time and displacement."""
    mean, err = mean_and_stderr(result.corr_sum, result.corr_sq, result.n)
    x = result.displacements
    keep = result.n_valid > 0
    if x_max is not None:
        keep &= np.abs(x) <= x_max
    return Curve(
        result.obs_times,
        mean[:, keep],
        result.n,
        err[:, keep],
        {"L": result.spec.L, "boundary": result.spec.boundary, "origins": result.spec.origin_sites()},
        ("x",),
        (x[keep],),
    )


@dataclass
class CollapseResult:
    D: float
    D_stderr: float
    max_residual: float
    n_points: int
    model: str = "lattice"


def collapse_check(
    C: Curve,
    t_min: float = 10.0,
    t_max: float | None = None,
    x_max: int | None = None,
    model: str = "lattice",
) -> CollapseResult:
    """Fit the diffusive scaling form to ``sqrt(t) C(x, t)``.

    ``model="gaussian"`` is the continuum form
    ``exp(-x^2 / 4Dt) / sqrt(4 pi D)``. ``model="lattice"`` (default) uses the
    nearest-neighbour lattice propagator ``exp(-2Dt) I_x(2Dt)``, which tends to
    the Gaussian at large ``Dt`` but removes its ``O(1/Dt)`` bias at the times
    reachable in simulation. The fit pools all ``(x, t)`` in the window,
    weighted by the error bars; the residual is the largest deviation relative
    to the fitted peak height.
    """
    if model not in ("lattice", "gaussian"):
        raise ValueError(f"unknown collapse model {model!r}")
    sel = C.window(t_min, np.inf if t_max is None else t_max)
    if len(sel) == 0:
        raise ValueError("no observation times in the collapse window")
    x = np.asarray(sel.index_values[0], dtype=float)
    cols = np.ones(x.size, bool) if x_max is None else np.abs(x) <= x_max
    x = x[cols]
    t = sel.times[:, None]
    y = np.sqrt(t) * sel.values[:, cols]
    if sel.stderr is not None and np.all(sel.stderr[:, cols] > 0):
        sig = np.sqrt(t) * sel.stderr[:, cols]
    else:
        sig = np.ones_like(y)

    def scaled(D):
        if model == "lattice":
            return np.sqrt(t) * special.ive(np.abs(x)[None, :], 2.0 * D * t)
        return np.exp(-(x[None, :] ** 2) / (4.0 * D * t)) / np.sqrt(4.0 * np.pi * D)

    fit = optimize.least_squares(lambda p: ((scaled(p[0]) - y) / sig).ravel(), [0.7], bounds=(1e-3, 10.0))
    D = float(fit.x[0])
    J = fit.jac
    dof = max(y.size - 1, 1)
    chi2 = float(np.sum(fit.fun**2)) / dof
    D_err = float(np.sqrt(max(chi2, 1.0) / (J.T @ J)[0, 0]))
    peak = float(np.max(scaled(D)))
    resid = float(np.max(np.abs(scaled(D) - y)) / peak)
    return CollapseResult(D, D_err, resid, int(y.size), model)


def d_of_t(source) -> Curve:
    """Running diffusion constant ``(1/2t) sum_x x^2 C_{0x}(t)``.

    With an :class:`EnsembleResult` the error bar comes from per-trajectory
    second moments; with a :class:`Curve` the per-x errors are combined as if
    independent.
    """
    if isinstance(source, EnsembleResult):
        mean, err = mean_and_stderr(source.var_sum, source.var_sq, source.n)
        t = source.obs_times
        return Curve(t, mean / (2 * t), source.n, err / (2 * t), {"L": source.spec.L})
    x = np.asarray(source.index_values[0], dtype=float)
    t = source.times
    val = source.values @ (x**2) / (2 * t)
    err = None
    if source.stderr is not None:
        err = np.sqrt((source.stderr**2) @ (x**4)) / (2 * t)
    return Curve(t, val, source.n_realizations, err, dict(source.metadata))


def w_curve(result: EnsembleResult, times=None, bonds=None) -> Curve:
    """Probability that a tracked bond has not fired by time ``t``.

    ``bonds`` selects columns of the tracked-bond list (all of them by
    default); the selected bonds are pooled.
    """
    fe = result.first_exchange
    if fe.shape[1] == 0:
        raise ValueError("no bonds were tracked")
    if bonds is not None:
        fe = fe[:, np.atleast_1d(bonds)]
    samples = np.sort(fe.ravel())
    times = result.obs_times if times is None else np.asarray(times, dtype=float)
    if np.any(times > result.spec.t_max):
        raise ValueError("w(t) is censored beyond t_max")
    n = samples.size
    w = 1.0 - np.searchsorted(samples, times, side="right") / n
    # pooled bonds are correlated; count trajectories, not bonds, for the error
    err = np.sqrt(w * (1 - w) / result.n)
    return Curve(times, w, result.n, err, {"n_bonds_pooled": int(fe.shape[1]), "n_samples": int(n)})


@dataclass
class WFit:
    """Stretched-exponential fit ``w = A exp(-b sqrt(t))`` and local exponent."""

    A: float
    b: float
    alpha: Curve
    n_points: int
    window: tuple


def fit_w_late(w: Curve, window: tuple = (4.0, np.inf), min_count: float = 30.0, alpha_step: float = 0.0) -> WFit:
    """Fit ``ln w = ln A - b sqrt(t)`` over ``window``.

    Points with fewer than ``min_count`` surviving samples are dropped, both
    from the fit and from the local exponent ``alpha = d ln(-ln w) / d ln t``.
    ``alpha`` is a centered difference; with ``alpha_step > 0`` it is taken
    at ``ln t +- alpha_step`` on the interpolated curve, which tames sampling
    noise on dense grids.
    """
    n = w.metadata.get("n_samples", w.n_realizations)
    resolved = w.values * n >= min_count
    keep = (w.times >= window[0]) & (w.times <= window[1]) & resolved
    if keep.sum() < 3:
        raise ValueError("too few points to fit the late-time tail")
    t, y = w.times[keep], np.log(w.values[keep])
    sig = w.stderr[keep] / w.values[keep] if w.stderr is not None else np.ones_like(y)
    X = np.column_stack([np.ones_like(t), -np.sqrt(t)]) / sig[:, None]
    coef, *_ = np.linalg.lstsq(X, y / sig, rcond=None)
    ok = resolved & (w.values > 0) & (w.values < 1) & (w.times > 0)
    lt, lw = np.log(w.times[ok]), np.log(-np.log(w.values[ok]))
    if alpha_step > 0 and lt.size > 1:
        inner = (lt - alpha_step >= lt[0]) & (lt + alpha_step <= lt[-1])
        lt_a = lt[inner]
        a = (np.interp(lt_a + alpha_step, lt, lw) - np.interp(lt_a - alpha_step, lt, lw)) / (2 * alpha_step)
        alpha = Curve(np.exp(lt_a), a, n)
    else:
        alpha = Curve(np.exp(lt), np.gradient(lw, lt) if lt.size > 1 else np.zeros_like(lt), n)
    return WFit(float(np.exp(coef[0])), float(coef[1]), alpha, int(keep.sum()), tuple(window))


def early_rate(w: Curve, t_max: float = 0.1) -> tuple[float, float]:
    """Initial decay rate of ``w``: slope of ``-ln w = g t - c t^2`` at t=0.

    Returns the rate and its standard error.
    """
    keep = (w.times > 0) & (w.times <= t_max)
    if keep.sum() < 3:
        raise ValueError("need at least three early-time points")
    t, y = w.times[keep], -np.log(w.values[keep])
    sig = w.stderr[keep] / w.values[keep]
    X = np.column_stack([t, -(t**2)]) / sig[:, None]
    coef, *_ = np.linalg.lstsq(X, y / sig, rcond=None)
    cov = np.linalg.inv(X.T @ X)
    return float(coef[0]), float(np.sqrt(cov[0, 0]))


# --- checkpoints --------------------------------------------------------------

_MAGIC = b"SFDLCKP1"
_ARRAYS = ("corr_sum", "corr_sq", "n_valid", "var_sum", "var_sq", "rule_sum", "rule_sq", "first_exchange")


def save_checkpoint(result: EnsembleResult, path) -> Path:
    """Binary checkpoint: magic, header, then length-prefixed little-endian arrays."""
    path = Path(path)
    s = result.spec
    with path.open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qqdqQqdq", s.L, s.boundary == "periodic", s.t_max, result.n,
                             int(s.master_seed) & MASK64, result.events, result.max_drift, result.aborted))
        for name in _ARRAYS:
            a = np.ascontiguousarray(getattr(result, name), dtype="<f8")
            fh.write(struct.pack("<q", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}q", *a.shape))
            fh.write(a.tobytes())
    return path


def load_checkpoint(path, spec: SimSpec) -> EnsembleResult:
    """Read a checkpoint; ``spec`` must match the one that produced it."""
    data = Path(path).read_bytes()
    if not data.startswith(_MAGIC):
        raise ValueError("not a checkpoint file")
    off = len(_MAGIC)
    hdr = struct.unpack_from("<qqdqQqdq", data, off)
    off += struct.calcsize("<qqdqQqdq")
    L, periodic, t_max, n, seed, events, drift, aborted = hdr
    if (L, bool(periodic), t_max, seed) != (spec.L, spec.boundary == "periodic", spec.t_max, int(spec.master_seed) & MASK64):
        raise ValueError("checkpoint does not match the simulation spec")
    arrays = {}
    for name in _ARRAYS:
        (ndim,) = struct.unpack_from("<q", data, off)
        off += 8
        shape = struct.unpack_from(f"<{ndim}q", data, off)
        off += 8 * ndim
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(data, "<f8", count, off).reshape(shape).copy()
        off += 8 * count
    return EnsembleResult(spec, n, events=events, max_drift=drift, aborted=aborted, **arrays)
