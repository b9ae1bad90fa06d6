"""Grids, spectral transforms and time derivatives on the flat torus."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curveforge.torus import (
    FieldError,
    GridField,
    SpaceTimeField,
    TorusGrid,
    forward_transform,
    gradient,
    inverse_transform,
    laplacian,
    partial,
    random_band_limited,
    spatial_map,
    time_derivative,
)


class TestTorusGrid:
    def test_geometry(self):
        g = TorusGrid(2, 16)
        assert g.shape == (16, 16)
        assert g.spacing == pytest.approx(2 * np.pi / 16)
        assert g.volume == pytest.approx((2 * np.pi) ** 2)

    @pytest.mark.parametrize("dim,n", [(0, 8), (1, 7), (1, 2)])
    def test_rejects_bad_sizes(self, dim, n):
        with pytest.raises(ValueError):
            TorusGrid(dim, n)

    def test_refined(self):
        assert TorusGrid(1, 16).refined().n == 32


class TestGridField:
    def test_rejects_nonfinite(self):
        with pytest.raises(FieldError):
            GridField(TorusGrid(1, 8), np.full(8, np.nan))

    def test_rejects_wrong_size(self):
        with pytest.raises(FieldError):
            GridField(TorusGrid(1, 8), np.zeros(9))

    def test_arithmetic_checks_grid(self):
        a = GridField.constant(TorusGrid(1, 8), 1.0)
        b = GridField.constant(TorusGrid(1, 16), 1.0)
        with pytest.raises(FieldError):
            a + b
        assert np.allclose((a * 3 - 1).values, 2.0)


class TestTransforms:
    def test_constant_mode(self):
        F = forward_transform(GridField.constant(TorusGrid(1, 16), 1.0))
        assert F.coefficient([0]) == pytest.approx(1.0)
        others = np.delete(F.coeffs.ravel(), 0)
        assert np.abs(others).max() < 1e-15

    def test_single_sine(self):
        g = TorusGrid(1, 16)
        F = forward_transform(GridField.from_function(g, np.sin))
        assert F.coefficient([1]) == pytest.approx(-0.5j)
        assert F.coefficient([-1]) == pytest.approx(0.5j)
        assert F.is_conjugate_symmetric()

    def test_round_trip(self, rng):
        g = TorusGrid(2, 16)
        f = random_band_limited(g, 6, rng)
        assert np.abs(inverse_transform(forward_transform(f)).values - f.values).max() < 1e-12

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), dim=st.integers(1, 3))
    def test_parseval(self, seed, dim):
        g = TorusGrid(dim, 8)
        f = random_band_limited(g, 3, np.random.default_rng(seed))
        l2 = float(np.sum(f.values**2) * g.cell_volume)
        spectral = forward_transform(f).weighted_norm_sq()
        assert abs(l2 - spectral) <= 1e-10 * max(l2, 1e-300)


class TestDerivatives:
    def test_constant(self):
        f = GridField.constant(TorusGrid(2, 8), 4.0)
        assert np.abs(laplacian(f).values).max() < 1e-13
        assert all(np.abs(d.values).max() < 1e-13 for d in gradient(f))

    def test_sine_eigenfunction(self, line64):
        f = GridField.from_function(line64, np.sin)
        assert np.allclose(laplacian(f).values, -np.sin(line64.axis), atol=1e-13)

    def test_against_fourth_order_differences(self, rng):
        def fd4(vals, h):
            return (-np.roll(vals, -2) + 8 * np.roll(vals, -1) - 8 * np.roll(vals, 1) + np.roll(vals, 2)) / (12 * h)

        errs = []
        for n in (64, 128):
            g = TorusGrid(1, n)
            f = GridField.from_function(g, lambda x: np.sin(x) + 0.5 * np.cos(3 * x))
            errs.append(np.abs(gradient(f)[0].values - fd4(f.values, g.spacing)).max())
        assert errs[0] / errs[1] == pytest.approx(16, rel=0.1)

    def test_mixed_partial(self):
        g = TorusGrid(2, 16)
        f = GridField.from_function(g, lambda x, y: np.sin(x) * np.sin(2 * y))
        d = partial(f, (1, 1))
        x, y = g.mesh()
        assert np.allclose(d.values, 2 * np.cos(x) * np.cos(2 * y), atol=1e-12)


class TestTimeDerivative:
    def test_linear_in_time_exact(self):
        g = TorusGrid(1, 16)
        u = SpaceTimeField.from_function(g, np.linspace(0, 1, 11), lambda x, t: t * np.sin(x))
        assert np.allclose(time_derivative(u).values, np.sin(g.axis), atol=1e-12)

    def test_second_order_accuracy(self):
        g = TorusGrid(1, 16)
        errs = []
        for nt in (41, 81):
            t = np.linspace(0, 1, nt)
            u = SpaceTimeField.from_function(g, t, lambda x, t: np.cos(t) * np.sin(x))
            exact = SpaceTimeField.from_function(g, t, lambda x, t: -np.sin(t) * np.sin(x))
            errs.append(np.abs(time_derivative(u).values - exact.values).max())
        assert errs[0] / errs[1] > 3.5

    def test_constant_in_time(self):
        g = TorusGrid(1, 8)
        u = SpaceTimeField.from_function(g, np.linspace(0, 1, 5), lambda x, t: np.cos(x) + 0 * t)
        assert np.abs(time_derivative(u, 2).values).max() < 1e-10

    def test_needs_enough_nodes(self):
        u = SpaceTimeField.from_function(TorusGrid(1, 8), [0.0, 1.0], lambda x, t: x * 0)
        with pytest.raises(ValueError):
            time_derivative(u, 1)

    def test_commutes_with_gradient(self):
        g = TorusGrid(1, 32)
        u = SpaceTimeField.from_function(g, np.linspace(0, 1, 41), lambda x, t: np.sin(x + t) * np.cos(2 * t))
        a = time_derivative(spatial_map(u, lambda f: gradient(f)[0]))
        b = spatial_map(time_derivative(u), lambda f: gradient(f)[0])
        assert np.abs(a.values - b.values).max() < 1e-10


class TestSpaceTimeField:
    def test_interpolation_is_linear(self):
        g = TorusGrid(1, 8)
        u = SpaceTimeField.from_function(g, [0.0, 1.0, 2.0], lambda x, t: t + 0 * x)
        assert np.allclose(u.interpolate(0.25), 0.25)
        with pytest.raises(ValueError):
            u.interpolate(3.0)
