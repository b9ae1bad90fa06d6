"""Energy of a solution and the integrated Gronwall check.

The energy E_s sums weighted squares of derivatives up to order s.  Along a
solution its square root should grow no faster than exponentially, at a
rate that the trace itself reveals.
"""
import numpy as np

from curveforge import PicardConfig, GridField, TorusGrid, picard_solve
from curveforge.energy import doubling_time, gronwall_check, norm_energy_bridge

grid = TorusGrid(1, 16)
phi = GridField.from_function(grid, lambda x: 0.05 * np.sin(x))
sol = picard_solve(lambda x, t: 0.01 * np.cos(x), phi, GridField.constant(grid),
                   PicardConfig(t0=1.0, kappa=4, dt=5e-3))

trace = sol.energy
header, table = trace.to_rows()
print(",".join(header[:1] + header[-3:]))
for row in table[:: len(table) // 5]:
    print(f"{row[0]:.2f}," + ",".join(f"{v:.4e}" for v in row[-3:]))

res = gronwall_check(trace)
print(f"empirical rate {res.rate:.3f}, pass {res.passed}, margin {res.margin:.2e}")
print(f"doubling time of sqrt(E_s): {doubling_time(trace)}")

# %% Norms are controlled by the energy with an explicit constant.
b = norm_energy_bridge(sol.u.at(-1), sol.u_t.at(-1), sol.u.at(-1), trace.s, 1)
print(f"||u||_Hs + ||u_t||_H(s-1) = {b.lhs:.4f} <= {b.bound:.3f} * sqrt(E_s) = {b.bound * b.sqrt_energy:.4f}")
