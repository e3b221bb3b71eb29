"""Two estimates of the energy diffusion constant, side by side.

The golden-rule integral and the moment-matrix limit are computed from the
semicircle alone, then compared with a short master-equation run on a ring.
"""
import numpy as np

from sffdl import diffusion_theory as dt
from sffdl import master_sim as ms

gr = dt.d_golden_rule()
mm, steps = dt.d_moment_matrix(return_steps=True)
print(f"golden rule     D/lambda^2 = {gr.D_over_lambda2:.7f}")
print(f"moment matrix   D/lambda^2 = {mm.D_over_lambda2:.6f} +- {mm.uncertainty:.1e}")
for k, v in steps.items():
    print(f"   1/(k^2 C11) at k = {k:<6} {v:.6f}")

# a small simulation; the running D(t) drifts towards the moment value
spec = ms.SimSpec(L=32, boundary="periodic", t_max=20.0, obs_times=tuple(np.linspace(1, 20, 20)),
                  n_trajectories=4000, master_seed=11, origins=tuple(range(32)), w_bonds="none")
res = ms.run_ensemble(spec)
D = ms.d_of_t(res)
for t, v in zip(D.times[::4], D.values[::4]):
    print(f"t = {t:5.1f}   D(t) = {v:.3f}")
