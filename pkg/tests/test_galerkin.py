"""Faedo-Galerkin assembly, integration and the linear solve."""
import numpy as np
import pytest

from curveforge.galerkin import (
    ConvergenceError,
    GalerkinBasis,
    GalerkinState,
    LinearCoefficients,
    StabilityError,
    apriori_report,
    assemble_system,
    integrate,
    project_initial_data,
    solve_galerkin,
    solve_linear,
    stability_bound,
)
from curveforge.torus import GridField, SpaceTimeField, TorusGrid

S, C = np.sin, np.cos


def coeffs_on(grid, T=1.0, nodes=101, **kw):
    return LinearCoefficients.from_functions(grid, np.linspace(0, T, nodes), **kw)


class TestGalerkinBasis:
    def test_orthonormal(self):
        b = GalerkinBasis(TorusGrid(2, 16), 3)
        assert np.allclose(b.gram(), np.eye(b.size), atol=1e-12)

    def test_ordering_and_eigenvalues(self):
        b = GalerkinBasis(TorusGrid(1, 16), 3)
        assert b.size == 7
        assert list(b.eigenvalues) == [0, 1, 1, 4, 4, 9, 9]
        assert b.index_of((2,), "sin") == 4

    def test_cutoff_must_resolve(self):
        with pytest.raises(ValueError):
            GalerkinBasis(TorusGrid(1, 8), 4)

    def test_eigenfunctions(self):
        from curveforge.torus import laplacian

        b = GalerkinBasis(TorusGrid(2, 16), 2)
        for w, lam in zip(b.modes, b.eigenvalues):
            f = GridField(b.grid, w)
            assert np.allclose(laplacian(f).values, -lam * f.values, atol=1e-12)


class TestLinearCoefficients:
    def test_rejects_nonpositive_alpha(self):
        with pytest.raises(ValueError):
            coeffs_on(TorusGrid(1, 8), alpha=lambda x, t: S(x))

    def test_rejects_alpha_outside_L(self):
        with pytest.raises(ValueError):
            coeffs_on(TorusGrid(1, 8), alpha=5.0, L=2.0)

    def test_operator_on_standing_wave(self):
        g = TorusGrid(1, 32)
        co = coeffs_on(g, nodes=201)
        u = SpaceTimeField.from_function(g, co.times, lambda x, t: C(t) * S(x))
        assert np.abs(co.apply_operator(u).values[1:-1]).max() < 1e-4


class TestAssembly:
    def test_wave_operator(self):
        b = GalerkinBasis(TorusGrid(1, 16), 3)
        sys = assemble_system(coeffs_on(b.grid, nodes=3), b)
        assert np.abs(sys.B).max() < 1e-14
        assert np.allclose(sys.A[0], np.diag(b.eigenvalues), atol=1e-12)

    def test_unit_damping(self):
        b = GalerkinBasis(TorusGrid(1, 16), 3)
        sys = assemble_system(coeffs_on(b.grid, nodes=3, a=1.0), b)
        assert np.allclose(sys.B[1], np.eye(b.size), atol=1e-12)

    def test_variable_damping_against_fine_quadrature(self):
        coarse = GalerkinBasis(TorusGrid(1, 16), 3)
        fine = GalerkinBasis(TorusGrid(1, 512), 3)
        B = [assemble_system(coeffs_on(b.grid, nodes=2, a=lambda x, t: S(x)), b).B[0] for b in (coarse, fine)]
        assert np.abs(B[0] - B[1]).max() < 1e-10

    def test_space_constant_coefficients_decouple(self):
        b = GalerkinBasis(TorusGrid(2, 12), 2)
        co = coeffs_on(b.grid, nodes=4, a=lambda x, y, t: t + 0 * x, alpha=lambda x, y, t: 2 + S(t) + 0 * x,
                       beta=lambda x, y, t: C(t) + 0 * x, gamma=0.5)
        sys = assemble_system(co, b)
        for M in (sys.A, sys.B):
            off = M - np.einsum("nii->ni", M)[:, :, None] * np.eye(b.size)
            assert np.abs(off).max() < 1e-12


class TestProjection:
    def test_basis_mode(self):
        b = GalerkinBasis(TorusGrid(1, 16), 4)
        proj = project_initial_data(GridField(b.grid, b.modes[5]), GridField.constant(b.grid), b)
        assert np.allclose(proj.state.eta, np.eye(b.size)[5], atol=1e-13)

    def test_zero(self):
        b = GalerkinBasis(TorusGrid(1, 16), 4)
        z = GridField.constant(b.grid)
        assert not np.any(project_initial_data(z, z, b).state.eta)

    def test_tail_energy(self):
        b = GalerkinBasis(TorusGrid(1, 32), 4)
        phi = GridField.from_function(b.grid, lambda x: S(x) + 0.1 * S(7 * x))
        proj = project_initial_data(phi, GridField.constant(b.grid), b)
        assert proj.phi_tail**2 == pytest.approx(0.01 * np.pi, rel=1e-10)


class TestIntegrate:
    def test_harmonic_oscillator(self):
        b = GalerkinBasis(TorusGrid(1, 8), 1)
        sys = assemble_system(coeffs_on(b.grid, nodes=2), b)
        eta0 = np.eye(b.size)[b.index_of((1,), "cos")]
        traj = integrate(sys, GalerkinState(eta0, np.zeros(b.size)), 1.0, 1e-3)
        assert abs(traj.eta[-1] @ eta0 - np.cos(1.0)) < 1e-8

    def test_free_particle(self):
        b = GalerkinBasis(TorusGrid(1, 8), 1)
        sys = assemble_system(coeffs_on(b.grid, nodes=2, f=0.3), b)
        F0 = 0.3 * np.sqrt(2 * np.pi)
        e0 = np.eye(b.size)[0]
        traj = integrate(sys, GalerkinState(0.5 * e0, 0.2 * e0), 1.0, 1e-2)
        assert traj.eta[-1, 0] == pytest.approx(0.5 + 0.2 + 0.5 * F0, abs=1e-12)

    def test_variable_damping_step_refinement(self):
        g = TorusGrid(1, 8)
        b = GalerkinBasis(g, 2)
        sys = assemble_system(coeffs_on(g, nodes=101, a=lambda x, t: 0.5 + 0.5 * S(3 * t) + 0 * x), b)
        s0 = GalerkinState(np.ones(b.size), np.zeros(b.size))
        coarse = integrate(sys, s0, 1.0, 1e-2)
        fine = integrate(sys, s0, 1.0, 1e-4)
        assert np.abs(coarse.eta[-1] - fine.eta[-1]).max() < 1e-7

    def test_stability_bound_enforced(self):
        b = GalerkinBasis(TorusGrid(1, 16), 4)
        sys = assemble_system(coeffs_on(b.grid, nodes=2), b)
        dt = 1.5 * stability_bound(sys.L, 4)
        with pytest.raises(StabilityError):
            integrate(sys, GalerkinState(np.zeros(b.size), np.zeros(b.size)), 1.0, dt)


class TestSolveLinear:
    def test_zero(self):
        g = TorusGrid(1, 16)
        z = GridField.constant(g)
        sol = solve_linear(coeffs_on(g, nodes=11), z, z, tol=1e-10, kappa0=2, dt=1e-2)
        assert not np.any(sol.u.values)

    def test_standing_wave(self):
        g = TorusGrid(1, 32)
        co = coeffs_on(g, nodes=1001)
        sol = solve_linear(co, GridField.from_function(g, S), GridField.constant(g), tol=1e-8, kappa0=2, dt=1e-3)
        exact = SpaceTimeField.from_function(g, sol.u.times, lambda x, t: C(t) * S(x))
        assert np.abs(sol.u.values - exact.values).max() < 1e-6

    def test_variable_speed_manufactured(self):
        g = TorusGrid(1, 32)
        co = coeffs_on(g, nodes=1001, alpha=lambda x, t: 1 + 0.2 * S(x),
                       f=lambda x, t: 0.2 * C(t) * S(x) ** 2)
        sol = solve_linear(co, GridField.from_function(g, S), GridField.constant(g), tol=1e-8, kappa0=4, dt=1e-3)
        exact = SpaceTimeField.from_function(g, sol.u.times, lambda x, t: C(t) * S(x))
        assert np.abs(sol.u.values - exact.values).max() < 5e-5

    def test_linearity(self):
        g = TorusGrid(1, 16)
        co = coeffs_on(g, nodes=201, alpha=lambda x, t: 1 + 0.2 * S(x), a=0.1)
        p1, p2 = GridField.from_function(g, S), GridField.from_function(g, lambda x: C(2 * x))
        z = GridField.constant(g)
        tol = 1e-7
        run = lambda p, q: solve_galerkin(co, p, q, 7, dt=5e-3).u.values  # noqa: E731
        total = run(p1 + p2, z + p1)
        assert np.abs(total - run(p1, z) - run(p2, p1)).max() < 2 * tol

    def test_spectral_convergence(self):
        g = TorusGrid(1, 32)
        w = lambda x: np.exp(0.3 * C(x))  # noqa: E731
        lap = lambda x: (0.09 * S(x) ** 2 - 0.3 * C(x)) * w(x)  # noqa: E731
        co = coeffs_on(g, T=0.5, nodes=501, f=lambda x, t: -C(t) * w(x) - C(t) * lap(x))
        phi, psi = GridField.from_function(g, w), GridField.constant(g)
        exact = SpaceTimeField.from_function(g, co.times, lambda x, t: C(t) * w(x))
        errs = [np.abs(solve_galerkin(co, phi, psi, k, dt=1e-3).u.values - exact.values).max() for k in (2, 4)]
        assert errs[0] / errs[1] >= 10

    def test_initial_data_fidelity(self):
        g = TorusGrid(1, 32)
        phi = GridField.from_function(g, lambda x: np.exp(S(x)))
        b = GalerkinBasis(g, 6)
        sol = solve_galerkin(coeffs_on(g, nodes=11), phi, GridField.constant(g), 6, dt=1e-2)
        assert np.abs(sol.u.values[0] - b.reconstruct(b.project(phi))).max() < 1e-12

    def test_convergence_failure_is_reported(self):
        g = TorusGrid(1, 16)
        phi = GridField.from_function(g, lambda x: np.exp(2 * S(x)))
        with pytest.raises(ConvergenceError) as info:
            solve_linear(coeffs_on(g, nodes=11), phi, GridField.constant(g), tol=1e-14, kappa0=2, dt=1e-2)
        assert info.value.gaps


class TestAprioriReport:
    def test_zero_data(self):
        g = TorusGrid(1, 16)
        z = GridField.constant(g)
        co = coeffs_on(g, nodes=11)
        sol = solve_galerkin(co, z, z, 2, dt=1e-2)
        assert apriori_report(sol, z, z, co.f) == (0.0, 0.0)

    def test_ratio_stable_under_refinement(self):
        g = TorusGrid(1, 32)
        phi, psi = GridField.from_function(g, S), GridField.constant(g)
        ratios = []
        for k, nodes in ((4, 501), (8, 1001)):
            co = coeffs_on(g, nodes=nodes)
            sol = solve_galerkin(co, phi, psi, k, dt=1.0 / (nodes - 1))
            lhs, rhs = apriori_report(sol, phi, psi, co.f)
            ratios.append(lhs / rhs)
        assert ratios[1] == pytest.approx(ratios[0], rel=0.2)

    def test_forcing_scaling(self):
        g = TorusGrid(1, 16)
        z = GridField.constant(g)
        ratios = []
        for c in (1.0, 2.0):
            co = coeffs_on(g, nodes=201, f=lambda x, t: c * S(t) * S(x))
            sol = solve_galerkin(co, z, z, 4, dt=5e-3)
            lhs, rhs = apriori_report(sol, z, z, co.f)
            ratios.append(lhs / rhs)
        assert ratios[1] == pytest.approx(ratios[0], rel=0.1)

    def test_higher_order_form(self):
        g = TorusGrid(1, 32)
        co = coeffs_on(g, nodes=201)
        phi, psi = GridField.from_function(g, S), GridField.constant(g)
        sol = solve_galerkin(co, phi, psi, 4, dt=5e-3)
        lhs, rhs = apriori_report(sol, phi, psi, co.f, order=3)
        assert 0 < lhs and 0 < rhs and np.isfinite(lhs / rhs)
