"""Exact diagonalization of random-matrix chains and a disordered spin-1/2 chain.

Builds sampled Hamiltonians, diagonalizes them densely and averages the
spectral form factor and the energy-density correlator over realizations.
Realization ``r`` of a run always draws from the stream keyed by
``(master_seed, kind, r)``, so results do not depend on how the work is split.
"""
from __future__ import annotations

import hashlib
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg

from .curves import Curve, mean_and_stderr
from .rmt_core import GueSpec, sample_gue
from .seeding import stream

__all__ = [
    "ChainSpec",
    "SpinChainSpec",
    "EigData",
    "DimensionError",
    "build_chain_hamiltonian",
    "build_spin_chain",
    "diagonalize",
    "sff",
    "sff_terms",
    "energy_correlator",
    "run_chain_sff",
    "run_spin_sff",
    "run_chain_correlator",
]

DEFAULT_MAX_DIM = 2**16


class DimensionError(ValueError):
    """Requested Hilbert space exceeds the configured guard."""


@dataclass(frozen=True)
class ChainSpec:
    """Chain of ``L`` GUE sites of dimension ``N`` with GUE bond couplings."""

    L: int
    N: int
    lam: float
    boundary: str = "open"
    max_dim: int = DEFAULT_MAX_DIM

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError("L must be a positive integer")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.boundary not in ("open", "periodic"):
            raise ValueError("boundary must be 'open' or 'periodic'")
        if self.N**self.L > self.max_dim:
            raise DimensionError(f"N^L = {self.N ** self.L} exceeds the guard {self.max_dim}")
        if self.lam > 0 and not (1.0 / self.N < self.lam < self.N ** -0.25):
            warnings.warn(
                f"lambda={self.lam} outside 1/N << lambda << N^(-1/4) for N={self.N}",
                RuntimeWarning,
                stacklevel=2,
            )

    @property
    def dim(self) -> int:
        return self.N**self.L

    def bonds(self) -> list[tuple[int, int]]:
        out = [(n, n + 1) for n in range(self.L - 1)]
        if self.boundary == "periodic" and self.L > 2:
            out.append((self.L - 1, 0))
        return out


@dataclass(frozen=True)
class SpinChainSpec:
    """Transverse-field Ising chain with random fields and couplings."""

    L: int
    boundary: str = "open"
    h_range: tuple = (-2.0, 2.0)
    J_range: tuple = (-0.8, 1.2)
    max_L: int = 16

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError("L must be a positive integer")
        if self.boundary not in ("open", "periodic"):
            raise ValueError("boundary must be 'open' or 'periodic'")
        if self.L > self.max_L:
            raise DimensionError(f"L = {self.L} exceeds the guard {self.max_L}")
        for lo, hi in (self.h_range, self.J_range):
            if lo > hi:
                raise ValueError("ranges must be (low, high)")

    @property
    def dim(self) -> int:
        return 2**self.L


def spec_hash(spec) -> str:
    return hashlib.sha1(repr(sorted(asdict(spec).items())).encode()).hexdigest()[:12]


@dataclass
class EigData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    realization_id: int = 0
    spec_hash: str = ""


# --- builders -----------------------------------------------------------------


def _embed(op: np.ndarray, sites: tuple[int, ...], N: int, L: int) -> np.ndarray:
    """Lift an operator on ``sites`` (in that tensor order) to the full chain.

    Site 0 is the most significant tensor factor. Works for any site set,
    including the wrapped bond ``(L-1, 0)``.
    """
    k = len(sites)
    rest = [s for s in range(L) if s not in sites]
    big = np.kron(op, np.eye(N ** (L - k)))
    # big acts on the ordering (sites..., rest...); permute to (0..L-1)
    order = list(sites) + rest
    perm = np.argsort(order)
    t = big.reshape((N,) * (2 * L))
    axes = list(perm) + [L + p for p in perm]
    return t.transpose(axes).reshape(N**L, N**L)


def build_chain_hamiltonian(spec: ChainSpec, rng: np.random.Generator, return_site_ops: bool = False):
    """``sum_n H_n + lam sum_n T_{n,n+1}`` for one realization.

    With ``return_site_ops`` also returns the embedded ``H_n`` (the same
    draws used in the Hamiltonian), as needed by :func:`energy_correlator`.
    """
    N, L = spec.N, spec.L
    site_ops = []
    H = np.zeros((spec.dim, spec.dim), dtype=complex)
    for n in range(L):
        h = _embed(sample_gue(GueSpec.site(N), rng), (n,), N, L)
        H += h
        if return_site_ops:
            site_ops.append(h)
    if spec.lam > 0:
        for a, b in spec.bonds():
            T = sample_gue(GueSpec.bond(N), rng)
            H += spec.lam * _embed(T, (a, b), N, L)
    return (H, site_ops) if return_site_ops else H




def build_spin_chain(spec: SpinChainSpec, rng: np.random.Generator) -> np.ndarray:
    """``sum_n J_n sz_n sz_{n+1} + sx_n + h_n sz_n`` in the sz product basis."""
    L = spec.L
    h = rng.uniform(*spec.h_range, size=L)
    n_bonds = L if (spec.boundary == "periodic" and L > 2) else L - 1
    J = rng.uniform(*spec.J_range, size=max(n_bonds, 0))
    dim = 2**L
    states = np.arange(dim)
    # bit for site n: site 0 is the most significant
    spins = 1 - 2 * ((states[:, None] >> (L - 1 - np.arange(L))[None, :]) & 1)
    diag = spins @ h
    for m in range(n_bonds):
        diag = diag + J[m] * spins[:, m] * spins[:, (m + 1) % L]
    H = np.zeros((dim, dim))
    H[states, states] = diag
    for n in range(L):
        flipped = states ^ (1 << (L - 1 - n))
        H[states, flipped] += 1.0
    return H


def diagonalize(H: np.ndarray, vectors: bool = False, realization_id: int = 0, tag: str = "") -> EigData:
    """Dense Hermitian eigensolve with a residual check when vectors are kept."""
    if vectors:
        w, V = linalg.eigh(H, check_finite=False)
        scale = np.max(np.abs(H)) or 1.0
        resid = np.max(np.abs(H @ V - V * w))
        if resid > 1e-8 * scale:
            raise FloatingPointError(f"eigen-residual {resid:.3g} exceeds 1e-8 |H|")
        return EigData(w, V, realization_id, tag)
    w = linalg.eigvalsh(H, check_finite=False)
    return EigData(w, None, realization_id, tag)


# --- observables ---------------------------------------------------------------


def sff_terms(eigenvalues: np.ndarray, times: np.ndarray, chunk: int = 64) -> np.ndarray:
    """``|sum_a exp(-i E_a t)|^2`` for one spectrum on a time grid."""
    E = np.asarray(eigenvalues, dtype=float)
    times = np.asarray(times, dtype=float)
    out = np.empty(times.size)
    for lo in range(0, times.size, chunk):
        ph = np.multiply.outer(times[lo : lo + chunk], E)
        c = np.cos(ph).sum(axis=1)
        s = np.sin(ph).sum(axis=1)
        out[lo : lo + chunk] = c * c + s * s
    return out


def sff(eig_sets, times) -> Curve:
    """Realization-averaged spectral form factor with its standard error."""
    eig_sets = list(eig_sets)
    if not eig_sets:
        raise ValueError("need at least one realization")
    times = np.asarray(times, dtype=float)
    total = np.zeros(times.size)
    total_sq = np.zeros(times.size)
    for e in eig_sets:
        k = sff_terms(e.eigenvalues, times)
        total += k
        total_sq += k * k
    mean, err = mean_and_stderr(total, total_sq, len(eig_sets))
    return Curve(times, mean, len(eig_sets), err, {"dim": int(eig_sets[0].eigenvalues.size)})


def energy_correlator(eig: EigData, site_ops, times, N: int) -> Curve:
    """``C_mn(t) = N^-L sum_ab e^{i(E_a - E_b)t} <a|H_m|b><b|H_n|a>`` for one realization.

    Returns a complex matrix-valued curve over ``(t, m, n)``.
    """
    if eig.eigenvectors is None:
        raise ValueError("energy_correlator needs eigenvectors")
    V = eig.eigenvectors
    E = eig.eigenvalues
    dim = E.size
    times = np.asarray(times, dtype=float)
    mats = [V.conj().T @ op @ V for op in site_ops]
    L = len(mats)
    # C_mn(t) = u^T X_mn conj(u) with u_a = e^{i E_a t} and X = A_m * A_n^T
    U = np.exp(1j * np.multiply.outer(times, E))
    out = np.zeros((times.size, L, L), dtype=complex)
    for m in range(L):
        for n in range(L):
            X = mats[m] * mats[n].T
            out[:, m, n] = np.einsum("ta,ta->t", U @ X, U.conj())
    out /= dim
    return Curve(times, out, 1, None, {"realization_id": eig.realization_id}, ("m", "n"))


# --- ensemble runners ------------------------------------------------------------


def _chain_sff_job(spec: ChainSpec, seed: int, rid: int, times: np.ndarray):
    H = build_chain_hamiltonian(spec, stream(seed, "chain", rid))
    return sff_terms(diagonalize(H).eigenvalues, times)


def _spin_sff_job(spec: SpinChainSpec, seed: int, rid: int, times: np.ndarray):
    H = build_spin_chain(spec, stream(seed, f"spin/{spec.boundary}", rid))
    return sff_terms(diagonalize(H).eigenvalues, times)


def _chain_corr_job(spec: ChainSpec, seed: int, rid: int, times):
    corr_times, sff_times = times
    H, ops = build_chain_hamiltonian(spec, stream(seed, "chain", rid), return_site_ops=True)
    eig = diagonalize(H, vectors=True, realization_id=rid)
    C = energy_correlator(eig, ops, corr_times, spec.N).values.real
    k = sff_terms(eig.eigenvalues, sff_times)
    return C, k


def _ensemble(job, spec, seed, n, times, workers, first_id=0):
    ids = range(first_id, first_id + n)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            yield from pool.map(job, [spec] * n, [seed] * n, ids, [times] * n)
    else:
        for rid in ids:
            yield job(spec, seed, rid, times)


def _reduce(results, times, meta) -> Curve:
    total = total_sq = None
    n = 0
    for k in results:
        total = k.copy() if total is None else total + k
        total_sq = k * k if total_sq is None else total_sq + k * k
        n += 1
    mean, err = mean_and_stderr(total, total_sq, n)
    return Curve(times, mean, n, err, meta)


def run_chain_sff(spec: ChainSpec, times, n_realizations: int, master_seed: int = 0, workers: int = 1) -> Curve:
    times = np.asarray(times, dtype=float)
    res = _ensemble(_chain_sff_job, spec, master_seed, n_realizations, times, workers)
    return _reduce(res, times, {"spec": asdict(spec), "master_seed": master_seed})


def run_spin_sff(spec: SpinChainSpec, times, n_realizations: int, master_seed: int = 0, workers: int = 1) -> Curve:
    times = np.asarray(times, dtype=float)
    res = _ensemble(_spin_sff_job, spec, master_seed, n_realizations, times, workers)
    return _reduce(res, times, {"spec": asdict(spec), "master_seed": master_seed})


def run_chain_correlator(
    spec: ChainSpec, times, n_realizations: int, master_seed: int = 0, workers: int = 1, sff_times=None, progress=None
):
    """Averaged ``C_mn(t)`` (real part) and ``K(t)`` from the same realizations.

    ``sff_times`` defaults to the correlator grid ``times``. The row sums
    ``sum_n C_mn`` and their standard errors go in the correlator metadata
    (``row_sum``, ``row_sum_stderr``), since the per-entry errors are correlated.
    """
    times = np.asarray(times, dtype=float)
    sff_times = times if sff_times is None else np.asarray(sff_times, dtype=float)
    C_tot = C_sq = K_tot = K_sq = R_tot = R_sq = None
    n = 0
    grids = (times, sff_times)
    for C, k in _ensemble(_chain_corr_job, spec, master_seed, n_realizations, grids, workers):
        R = C.sum(axis=2)
        if C_tot is None:
            C_tot, C_sq, K_tot, K_sq = C.copy(), C * C, k.copy(), k * k
            R_tot, R_sq = R.copy(), R * R
        else:
            C_tot += C
            C_sq += C * C
            K_tot += k
            K_sq += k * k
            R_tot += R
            R_sq += R * R
        n += 1
        if progress:
            progress(n, n_realizations)
    meta = {"spec": asdict(spec), "master_seed": master_seed}
    Cm, Ce = mean_and_stderr(C_tot, C_sq, n)
    Km, Ke = mean_and_stderr(K_tot, K_sq, n)
    Rm, Re = mean_and_stderr(R_tot, R_sq, n)
    C = Curve(times, Cm, n, Ce, {**meta, "row_sum": Rm, "row_sum_stderr": Re}, ("m", "n"))
    return C, Curve(sff_times, Km, n, Ke, meta)


def projected_runtime(seconds_per_realization: float, n_realizations: int, workers: int = 1) -> float:
    return seconds_per_realization * n_realizations / max(workers, 1)


def heisenberg_time(dim: int, bandwidth: float) -> float:
    """``2 pi / mean level spacing`` for a spectrum of ``dim`` levels."""
    return 2.0 * math.pi * dim / bandwidth
