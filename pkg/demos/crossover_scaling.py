"""How the ramp onset of the chain SFF moves with chain length.

Uses the stretched-exponential fit of the return probability w(t) and
solves L t w(t) = 1 for each L.
"""
import numpy as np

from sffdl import diffusion_theory as dt

A, b, lam = 30.3, 3.69, 0.1
fit = dt.fit_crossover_scaling(A, b, lam)
for L, ts in zip(fit.Ls, fit.t_star):
    print(f"L = {int(L):5d}   t* = {ts:10.1f}   a + c ln^2 L = {fit.a + fit.c * np.log(L) ** 2:10.1f}")
print(f"rms rel residual {fit.rms_rel_residual:.3f}, max {fit.max_rel_residual:.3f}")
