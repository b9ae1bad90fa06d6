"""CSV and binary round trips."""
import numpy as np
import pytest

from curveforge.fieldio import read_field, write_field
from curveforge.torus import FieldError, GridField, SpaceTimeField, TorusGrid, random_band_limited


class TestRoundTrip:
    @pytest.mark.parametrize("suffix", ["csv", "bin"])
    def test_grid_field(self, tmp_path, rng, suffix):
        f = random_band_limited(TorusGrid(2, 8), 3, rng)
        write_field(tmp_path / f"f.{suffix}", f)
        back = read_field(tmp_path / f"f.{suffix}")
        assert isinstance(back, GridField) and back.grid == f.grid
        assert np.array_equal(back.values, f.values)

    @pytest.mark.parametrize("suffix", ["csv", "bin"])
    def test_spacetime_field(self, tmp_path, suffix):
        g = TorusGrid(1, 8)
        u = SpaceTimeField.from_function(g, np.linspace(0, 1, 5), lambda x, t: np.sin(x) * np.exp(t))
        write_field(tmp_path / f"u.{suffix}", u)
        back = read_field(tmp_path / f"u.{suffix}")
        assert np.array_equal(back.times, u.times)
        assert np.array_equal(back.values, u.values)

    def test_truncated_binary_rejected(self, tmp_path):
        f = GridField.constant(TorusGrid(1, 8), 1.0)
        write_field(tmp_path / "f.bin", f)
        raw = (tmp_path / "f.bin").read_bytes()
        (tmp_path / "f.bin").write_bytes(raw[:-8])
        with pytest.raises(FieldError):
            read_field(tmp_path / "f.bin")
