"""Diffusive collapse of the energy autocorrelator from the master equation.

Plots sqrt(t) C(x, t) against x / sqrt(t) if matplotlib is around,
otherwise prints the fitted D and the worst residual.
"""
import numpy as np

from sffdl import master_sim as ms

spec = ms.SimSpec(L=48, t_max=20.0, obs_times=(5.0, 10.0, 15.0, 20.0), n_trajectories=20000, master_seed=5)
C = ms.autocorrelator(ms.run_ensemble(spec), x_max=10)
fit = ms.collapse_check(C, t_min=5.0, x_max=10)
print(f"D = {fit.D:.3f} +- {fit.D_stderr:.3f}, max residual {fit.max_residual:.3f} over {fit.n_points} points")

try:
    import matplotlib.pyplot as plt
except ImportError:
    raise SystemExit(0)

x = C.index_values[0].astype(float)
for t, row in zip(C.times, C.values):
    plt.plot(x / np.sqrt(t), np.sqrt(t) * row, "o", label=f"t = {t:g}")
plt.xlabel("x / sqrt(t)")
plt.ylabel("sqrt(t) C(x, t)")
plt.legend()
plt.savefig("collapse.png", dpi=120)
