"""Two coupled random-matrix sites: exact SFF against the analytic curves."""
import numpy as np

from sffdl import exact_diag as ed
from sffdl import twosite_analytic as ta

N, lam, n_real = 24, 0.1, 20
t = np.geomspace(1.0, 4.0 * N * N, 60)

K = ed.run_chain_sff(ed.ChainSpec(2, N, lam), t, n_real, master_seed=3)
curves = ta.k_two_site_curve(t, ta.TwoSiteParams(N, lam))

print(f"N = {N}, lambda = {lam}, {n_real} realizations; gamma_bar = {ta.gamma_bar(lam):.5f}")
print(f"{'t':>9} {'ED':>10} {'early':>10} {'late':>10} {'crossover':>10}")
for i in range(0, t.size, 6):
    row = [K.values[i]] + [curves[k].values[i] for k in ("early", "late", "crossover")]
    print(f"{t[i]:9.2f} " + " ".join(f"{v:10.2f}" for v in row))
