"""Small prescribed curvature from rest.

With zero initial data and a small prescribed curvature, the iteration
should converge on the whole window and the energy should stay well below
the bound D / (2 sqrt 2).  Growing the amplitude until it stops converging
gives an empirical smallness threshold.
"""
import numpy as np

from curveforge import PicardConfig, TorusGrid, small_data_solve
from curveforge.picard import smallness_threshold

grid = TorusGrid(1, 16)
cfg = PicardConfig(kappa=4, dt=5e-3)


def shape(x, t):
    return np.sin(x) * np.sin(t)


sol = small_data_solve(lambda x, t: 1e-3 * shape(x, t), grid, 1.0, cfg)
print(f"converged on [0, {sol.t0}] in {len(sol.report.d)} iterations")
print(f"sup norm {sol.sup_norm():.2e} <= D = {sol.D:.3f}")
print(f"max sqrt(E_s) {sol.energy.sqrt_Es.max():.2e} <= D/(2 sqrt 2) = {sol.D / (2 * np.sqrt(2)):.3f}")

# %% Amplitude bracket: doubling until failure, then a few bisection steps.
rep = smallness_threshold(shape, grid, 1.0, PicardConfig(kappa=2, dt=1e-2, max_iters=15), steps=3,
                          max_amplitude=100)
for amp, ok in rep.history:
    print(f"  amplitude {amp:9.4f}  {'converged' if ok else 'failed'}")
print(f"last convergent amplitude {rep.epsilon:.4f}, first failure {rep.failed_at}")
