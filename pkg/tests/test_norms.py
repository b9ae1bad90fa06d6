"""Sobolev and C^k norms, and the bounded-ratio functional inequalities."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curveforge.norms import (
    ck_norm,
    composition_ratio,
    derivative_l2_norm,
    interpolation_exponent,
    interpolation_ratio,
    product_ratio,
    sobolev_norm,
    sobolev_norm_spacetime,
    sup_sobolev,
)
from curveforge.torus import GridField, SpaceTimeField, TorusGrid, random_band_limited


class TestSobolevNorm:
    @pytest.mark.parametrize("s", [0, 1, 3])
    def test_zero(self, line64, s):
        assert sobolev_norm(GridField.constant(line64), s) == 0.0

    def test_sine_h2(self, line64):
        f = GridField.from_function(line64, np.sin)
        assert sobolev_norm(f, 2) ** 2 == pytest.approx(3 * np.pi, rel=1e-12)

    def test_sin3x_h1(self, line64):
        f = GridField.from_function(line64, lambda x: np.sin(3 * x))
        assert sobolev_norm(f, 1) ** 2 == pytest.approx(10 * np.pi, rel=1e-12)

    def test_matches_quadrature_of_derivatives(self):
        g = TorusGrid(2, 32)
        f = GridField.from_function(g, lambda x, y: np.sin(x) * np.cos(2 * y))
        # |grad f|^2 integrates to (1 + 4) * pi^2 / ... by separation
        l2sq = np.sum(f.values**2) * g.cell_volume
        assert derivative_l2_norm(f, 1) ** 2 == pytest.approx(5 * l2sq, rel=1e-12)

    def test_order_above_nyquist_rejected(self):
        with pytest.raises(ValueError):
            sobolev_norm(GridField.constant(TorusGrid(1, 8)), 5)

    def test_spacetime_norm(self):
        g = TorusGrid(1, 32)
        u = SpaceTimeField.from_function(g, np.linspace(0, 1, 201), lambda x, t: t * np.sin(x))
        assert sup_sobolev(u, 0) == pytest.approx(np.sqrt(np.pi))
        assert sobolev_norm_spacetime(u, 1, 0) == pytest.approx(np.sqrt(np.pi), rel=1e-9)


class TestCkNorm:
    def test_constant(self):
        assert ck_norm(GridField.constant(TorusGrid(1, 16), 2.0), 0) == pytest.approx(2.0)

    def test_sine(self, line64):
        assert ck_norm(GridField.from_function(line64, np.sin), 1) == pytest.approx(np.sqrt(2), rel=1e-6)

    def test_dense_sampling_oracle(self, rng):
        g = TorusGrid(1, 16)
        f = random_band_limited(g, 5, rng)
        c = np.fft.fft(f.values) / 16
        xs = np.linspace(0, 2 * np.pi, 20001)
        k = np.fft.fftfreq(16, 1 / 16)
        dense = np.real(np.exp(1j * np.outer(xs, k)) @ c)
        assert ck_norm(f, 0) == pytest.approx(np.abs(dense).max(), abs=1e-3)


class TestInequalities:
    def test_exponent_relation(self):
        # endpoint j = 1, n = 2, a = 1 in dimension 2 gives p = inf
        assert interpolation_exponent(2, 1, 2, 2.0, 2.0, 1.0) == np.inf
        with pytest.raises(ValueError):
            interpolation_exponent(1, 2, 2, 2.0, 2.0, 0.5)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_ratios_finite(self, seed):
        rng = np.random.default_rng(seed)
        g = TorusGrid(1, 32)
        f = random_band_limited(g, 6, rng)
        h = random_band_limited(g, 6, rng)
        for r in (interpolation_ratio(f, 1, 2, 0.75), product_ratio(f, h, 2), composition_ratio(f, 2)):
            assert np.isfinite(r) and r > 0
