"""Prescribing curvature: the Picard iteration on a manufactured problem.

Pick u* = 0.2 sin(x) sin(t), compute the curvature it produces, and ask the
solver to recover u* from that curvature and the initial data alone.  Each
Picard step freezes the coefficients at the previous iterate and solves a
linear wave equation.
"""
import numpy as np

from curveforge import PicardConfig, SpaceTimeField, picard_solve
from curveforge.experiments import manufactured_nonlinear

R, phi, psi, exact = manufactured_nonlinear(N=32, T=0.5, nodes=501)
sol = picard_solve(R, phi, psi, PicardConfig(t0=0.5, kappa=8, dt=1e-3))

# %% The iteration gaps shrink geometrically.
for n, (d, held) in enumerate(zip(sol.report.d, sol.report.bound_held), start=1):
    print(f"iterate {n:2d}  gap {d:.3e}  bound held {held}")
print(f"geometric fit R^2 = {sol.report.geometric_fit_r2():.4f}")

# %% Recovery error and the residual of the curvature equation.
u_star = SpaceTimeField.from_function(sol.u.grid, sol.u.times, exact)
print(f"max |u - u*| = {np.abs(sol.u.values - u_star.values).max():.2e}")
print(f"max residual  = {sol.max_residual:.2e}")
