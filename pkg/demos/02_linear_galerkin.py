"""The linear wave equation by Faedo-Galerkin.

u_tt + a u_t - (alpha Lap u + <grad beta, grad u> + gamma u) = f on the
circle, solved in the span of the first few Fourier modes.  Doubling the
cutoff until successive answers agree gives the converged solution, and
the a priori report compares the solution norms with the data norms.
"""
import numpy as np

from curveforge import GridField, LinearCoefficients, SpaceTimeField, TorusGrid, solve_linear
from curveforge.galerkin import apriori_report

grid = TorusGrid(1, 32)
times = np.linspace(0.0, 1.0, 1001)

# %% Variable wave speed alpha = 1 + 0.2 sin x.  The forcing is chosen so
# that u* = cos(t) sin(x) is the exact solution.
coeffs = LinearCoefficients.from_functions(
    grid, times,
    alpha=lambda x, t: 1 + 0.2 * np.sin(x),
    f=lambda x, t: 0.2 * np.cos(t) * np.sin(x) ** 2,
)
phi = GridField.from_function(grid, np.sin)
psi = GridField.constant(grid)

sol = solve_linear(coeffs, phi, psi, tol=1e-8, kappa0=2, dt=1e-3)
exact = SpaceTimeField.from_function(grid, sol.u.times, lambda x, t: np.cos(t) * np.sin(x))
print("cutoff gaps:", [(k, f"{g:.1e}") for k, g in sol.gaps])
print(f"final cutoff {sol.basis.kappa}, max error {np.abs(sol.u.values - exact.values).max():.2e}")

# %% Measured left and right sides of the energy-type a priori estimate.
lhs, rhs = apriori_report(sol, phi, psi, coeffs.f)
print(f"a priori: lhs {lhs:.3f}, data {rhs:.3f}, ratio {lhs / rhs:.3f}")
