"""Compiled Gillespie kernels for the energy-exchange master equation.

Time is the rescaled ``tau = lambda^2 t``, so bond rates are
``2 pi rho_tot(eps_m + eps_{m+1})`` with no lambda factor. Each trajectory
owns a xoshiro256** stream seeded from ``(master_seed, kind, trajectory_id)``
through splitmix64, matching :func:`sffdl.seeding.derive_seed`.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0
_RHO_NORM = 1.0 / (2.0 * math.pi)
TWO_PI = 2.0 * math.pi


@njit(cache=True)
def splitmix64(x):
    x = x + _GOLDEN
    z = x
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    return z ^ (z >> _U64(31))


@njit(cache=True)
def derive_seed(master_seed, kind_code, index):
    h = splitmix64(master_seed)
    h = splitmix64(h ^ kind_code)
    return splitmix64(h ^ index)


@njit(cache=True)
def seed_state(state, seed):
    x = seed
    for i in range(4):
        x = x + _GOLDEN
        z = x
        z = (z ^ (z >> _U64(30))) * _MIX1
        z = (z ^ (z >> _U64(27))) * _MIX2
        state[i] = z ^ (z >> _U64(31))


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << _U64(k)) | (x >> _U64(64 - k))


@njit(cache=True, inline="always")
def next_u64(s):
    result = _rotl(s[1] * _U64(5), 7) * _U64(9)
    t = s[1] << _U64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True, inline="always")
def uniform(s):
    """Uniform double in [0, 1)."""
    return float(next_u64(s) >> _U64(11)) * _INV53


@njit(cache=True, inline="always")
def rho(x):
    v = 4.0 - x * x
    return math.sqrt(v) * _RHO_NORM if v > 0.0 else 0.0


@njit(cache=True, inline="always")
def rate(s, lo, inv_h, coef):
    """Pair exchange rate from the cubic-spline table of rho_tot."""
    u = (s - lo) * inv_h
    i = int(u)
    n = coef.shape[1]
    if i < 0 or i >= n:
        return 0.0
    dx = (u - i) / inv_h
    v = ((coef[0, i] * dx + coef[1, i]) * dx + coef[2, i]) * dx + coef[3, i]
    return TWO_PI * v if v > 0.0 else 0.0


@njit(cache=True)
def sample_semicircle(s):
    while True:
        x = 4.0 * uniform(s) - 2.0
        if uniform(s) * (1.0 / math.pi) < rho(x):
            return x


@njit(cache=True)
def sample_pair(total, s):
    """Draw the new left energy with density prop. to rho(x) rho(total - x)."""
    lo = max(-2.0, total - 2.0)
    hi = min(2.0, total + 2.0)
    # rho(x) rho(total-x) is log-concave and symmetric about total/2
    env = rho(0.5 * total) ** 2
    width = hi - lo
    while True:
        x = lo + width * uniform(s)
        if uniform(s) * env < rho(x) * rho(total - x):
            return x


@njit(cache=True)
def _init_trajectory(state, energies, rates, n_bonds, L, lo, inv_h, coef):
    for i in range(L):
        energies[i] = sample_semicircle(state)
    total = 0.0
    for m in range(n_bonds):
        r = rate(energies[m] + energies[(m + 1) % L], lo, inv_h, coef)
        rates[m] = r
        total += r
    return total


@njit(cache=True)
def _select_bond(rates, n_bonds, target):
    acc = 0.0
    for m in range(n_bonds):
        acc += rates[m]
        if target < acc:
            return m
    # target landed on accumulated rounding; take the last live bond
    for m in range(n_bonds - 1, -1, -1):
        if rates[m] > 0.0:
            return m
    return -1


@njit(cache=True)
def _refresh_rates(energies, rates, n_bonds, L, m, periodic, lo, inv_h, coef):
    delta = 0.0
    for b in (m - 1, m, m + 1):
        if periodic:
            b = b % n_bonds
        elif b < 0 or b >= n_bonds:
            continue
        r = rate(energies[b] + energies[(b + 1) % L], lo, inv_h, coef)
        delta += r - rates[b]
        rates[b] = r
    return delta


@njit(cache=True, inline="always")
def _disp(i, o, L, periodic):
    # minimal-image displacement on a ring, plain difference on an open chain
    d = i - o
    if periodic:
        d = (d + (L - 1) // 2) % L - (L - 1) // 2
    return d


@njit(cache=True)
def run_batch(
    L,
    periodic,
    t_max,
    obs_times,
    master_seed,
    kind_code,
    first_id,
    n_traj,
    origins,
    w_bonds,
    lo,
    inv_h,
    coef,
    save_snapshots,
):
    """Simulate ``n_traj`` trajectories with ids ``first_id ...``.

    Returns accumulated sums for the energy autocorrelator, the D(t) variance
    estimator and its sum rule, first-exchange times on ``w_bonds``, event
    counts, the worst energy drift and optional full snapshots.
    """
    n_bonds = L if periodic else L - 1
    n_obs = obs_times.size
    n_x = 2 * L - 1
    corr_sum = np.zeros((n_obs, n_x))
    corr_sq = np.zeros((n_obs, n_x))
    n_valid = np.zeros(n_x)
    for o in origins:
        for i in range(L):
            n_valid[_disp(i, o, L, periodic) + L - 1] += 1.0
    var_sum = np.zeros(n_obs)
    var_sq = np.zeros(n_obs)
    rule_sum = np.zeros(n_obs)
    rule_sq = np.zeros(n_obs)
    first_exchange = np.full((n_traj, w_bonds.size), np.inf)
    if save_snapshots:
        snapshots = np.zeros((n_traj, n_obs + 1, L))
    else:
        snapshots = np.zeros((0, 0, 0))
    events = np.zeros(n_traj, dtype=np.int64)
    max_drift = 0.0
    aborted = 0

    bond_slot = np.full(n_bonds, -1, dtype=np.int64)
    for k in range(w_bonds.size):
        bond_slot[w_bonds[k]] = k

    state = np.zeros(4, dtype=np.uint64)
    energies = np.zeros(L)
    initial = np.zeros(L)
    rates = np.zeros(n_bonds)
    vals = np.zeros(n_x)

    for j in range(n_traj):
        traj_id = np.uint64(first_id + j)
        seed_state(state, derive_seed(master_seed, kind_code, traj_id))
        total_rate = _init_trajectory(state, energies, rates, n_bonds, L, lo, inv_h, coef)
        for i in range(L):
            initial[i] = energies[i]
        e_sum0 = 0.0
        for i in range(L):
            e_sum0 += energies[i]
        if save_snapshots:
            for i in range(L):
                snapshots[j, 0, i] = energies[i]

        tau = 0.0
        k_obs = 0
        n_ev = 0
        while True:
            if total_rate <= 0.0:
                aborted += 1
                break
            dt = -math.log(1.0 - uniform(state)) / total_rate
            tau_next = tau + dt
            # snapshots see the configuration after the last event with tau <= t
            while k_obs < n_obs and obs_times[k_obs] < tau_next:
                for x in range(n_x):
                    vals[x] = 0.0
                for o in origins:
                    e0 = initial[o]
                    for i in range(L):
                        vals[_disp(i, o, L, periodic) + L - 1] += e0 * energies[i]
                var = 0.0
                rule = 0.0
                for x in range(n_x):
                    if n_valid[x] > 0:
                        v = vals[x] / n_valid[x]
                        corr_sum[k_obs, x] += v
                        corr_sq[k_obs, x] += v * v
                        d = x - L + 1
                        var += d * d * v
                        rule += v
                var_sum[k_obs] += var
                var_sq[k_obs] += var * var
                rule_sum[k_obs] += rule
                rule_sq[k_obs] += rule * rule
                if save_snapshots:
                    for i in range(L):
                        snapshots[j, k_obs + 1, i] = energies[i]
                k_obs += 1
            if tau_next >= t_max:
                break
            tau = tau_next
            m = _select_bond(rates, n_bonds, uniform(state) * total_rate)
            if m < 0:
                aborted += 1
                break
            right = (m + 1) % L
            pair = energies[m] + energies[right]
            new_left = sample_pair(pair, state)
            energies[m] = new_left
            energies[right] = pair - new_left
            total_rate += _refresh_rates(energies, rates, n_bonds, L, m, periodic, lo, inv_h, coef)
            n_ev += 1
            if n_ev % 4096 == 0:
                total_rate = 0.0
                for b in range(n_bonds):
                    total_rate += rates[b]
            slot = bond_slot[m]
            if slot >= 0 and first_exchange[j, slot] == np.inf:
                first_exchange[j, slot] = tau
        events[j] = n_ev
        e_sum = 0.0
        for i in range(L):
            e_sum += energies[i]
        drift = abs(e_sum - e_sum0)
        if drift > max_drift:
            max_drift = drift
    return (
        corr_sum,
        corr_sq,
        n_valid,
        var_sum,
        var_sq,
        rule_sum,
        rule_sq,
        first_exchange,
        events,
        max_drift,
        aborted,
        snapshots,
    )


@njit(cache=True)
def run_logged(L, periodic, t_max, obs_times, master_seed, kind_code, traj_id, lo, inv_h, coef):
    """One trajectory with its full event list and observation snapshots.

    Consumes the random stream exactly as :func:`run_batch` does, so the same
    ``(master_seed, traj_id)`` yields the same trajectory in both kernels.
    """
    n_bonds = L if periodic else L - 1
    n_obs = obs_times.size
    state = np.zeros(4, dtype=np.uint64)
    seed_state(state, derive_seed(master_seed, kind_code, np.uint64(traj_id)))
    energies = np.zeros(L)
    rates = np.zeros(n_bonds)
    total_rate = _init_trajectory(state, energies, rates, n_bonds, L, lo, inv_h, coef)
    initial = energies.copy()
    snapshots = np.zeros((n_obs, L))
    cap = 1024
    ev_tau = np.zeros(cap)
    ev_bond = np.zeros(cap, dtype=np.int64)
    ev_before = np.zeros((cap, 2))
    ev_after = np.zeros((cap, 2))
    n_ev = 0
    tau = 0.0
    k_obs = 0
    while True:
        if total_rate <= 0.0:
            break
        dt = -math.log(1.0 - uniform(state)) / total_rate
        tau_next = tau + dt
        while k_obs < n_obs and obs_times[k_obs] < tau_next:
            snapshots[k_obs, :] = energies
            k_obs += 1
        if tau_next >= t_max:
            break
        tau = tau_next
        m = _select_bond(rates, n_bonds, uniform(state) * total_rate)
        if m < 0:
            break
        right = (m + 1) % L
        pair = energies[m] + energies[right]
        before_l = energies[m]
        before_r = energies[right]
        new_left = sample_pair(pair, state)
        energies[m] = new_left
        energies[right] = pair - new_left
        total_rate += _refresh_rates(energies, rates, n_bonds, L, m, periodic, lo, inv_h, coef)
        if n_ev == cap:
            cap *= 2
            ev_tau = _grow1(ev_tau, cap)
            ev_bond = _grow1i(ev_bond, cap)
            ev_before = _grow2(ev_before, cap)
            ev_after = _grow2(ev_after, cap)
        ev_tau[n_ev] = tau
        ev_bond[n_ev] = m
        ev_before[n_ev, 0] = before_l
        ev_before[n_ev, 1] = before_r
        ev_after[n_ev, 0] = energies[m]
        ev_after[n_ev, 1] = energies[right]
        n_ev += 1
        if n_ev % 4096 == 0:
            total_rate = 0.0
            for b in range(n_bonds):
                total_rate += rates[b]
    while k_obs < n_obs:
        snapshots[k_obs, :] = energies
        k_obs += 1
    return (
        initial,
        energies,
        ev_tau[:n_ev].copy(),
        ev_bond[:n_ev].copy(),
        ev_before[:n_ev].copy(),
        ev_after[:n_ev].copy(),
        snapshots,
    )


@njit(cache=True)
def _grow1(a, cap):
    out = np.zeros(cap)
    out[: a.size] = a
    return out


@njit(cache=True)
def _grow1i(a, cap):
    out = np.zeros(cap, dtype=np.int64)
    out[: a.size] = a
    return out


@njit(cache=True)
def _grow2(a, cap):
    out = np.zeros((cap, a.shape[1]))
    out[: a.shape[0]] = a
    return out


@njit(cache=True)
def uniforms(master_seed, kind_code, index, n):
    """First ``n`` uniforms of a stream (used to check the generator)."""
    state = np.zeros(4, dtype=np.uint64)
    seed_state(state, derive_seed(master_seed, kind_code, np.uint64(index)))
    out = np.empty(n)
    for i in range(n):
        out[i] = uniform(state)
    return out
