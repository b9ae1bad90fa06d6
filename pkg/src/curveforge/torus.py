"""Periodic grids on the flat torus and the fields that live on them.

The torus is ``[0, 2*pi)^m`` with the identity metric.  Fields are sampled
on a uniform grid with ``N`` points per axis; spectral coefficients follow
numpy's FFT ordering and are normalised so that

.. math::

    f(x) = \\sum_k c_k e^{i k \\cdot x}.

Derivative multipliers are ``(i k)``.  For first derivatives the Nyquist
wavenumber is dropped (its derivative is not a real field); the Laplacian
keeps the full ``-|k|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


class FieldError(ValueError):
    """Raised for malformed or non-finite field data."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the flat m-torus ``[0, 2pi)^m``."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.n < 4 or self.n % 2:
            raise ValueError(f"points per axis must be even and >= 4, got {self.n}")

    @property
    def spacing(self) -> float:
        return TWO_PI / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def volume(self) -> float:
        return TWO_PI**self.dim

    @property
    def axis(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``self.shape``, one per axis."""
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers along one axis, FFT ordering."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n)

    def wavevectors(self, drop_nyquist: bool = False) -> tuple[np.ndarray, ...]:
        """Broadcastable per-axis wavenumber arrays."""
        k = self.wavenumbers()
        if drop_nyquist:
            k = np.where(np.abs(k) == self.n // 2, 0.0, k)
        out = []
        for d in range(self.dim):
            shape = [1] * self.dim
            shape[d] = self.n
            out.append(k.reshape(shape))
        return tuple(out)

    def k_squared(self, drop_nyquist: bool = False) -> np.ndarray:
        return sum(kd**2 for kd in self.wavevectors(drop_nyquist))

    def refined(self, factor: int = 2) -> "TorusGrid":
        return TorusGrid(self.dim, self.n * factor)


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise FieldError(f"{what} contains NaN or Inf")


@dataclass(frozen=True)
class GridField:
    """Real samples on a :class:`TorusGrid`."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                raise FieldError(
                    f"expected {self.grid.size} samples, got shape {values.shape}"
                )
            values = values.reshape(self.grid.shape)
        _check_finite(values, "GridField")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: TorusGrid, fn: Callable[..., np.ndarray]) -> "GridField":
        vals = np.broadcast_to(fn(*grid.mesh()), grid.shape)
        return cls(grid, np.array(vals, dtype=float))

    @classmethod
    def constant(cls, grid: TorusGrid, c: float = 0.0) -> "GridField":
        return cls(grid, np.full(grid.shape, float(c)))

    def integrate(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def _coerce(self, other):
        if isinstance(other, GridField):
            if other.grid != self.grid:
                raise FieldError("grid mismatch")
            return other.values
        return other

    def __add__(self, other):
        return GridField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridField(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return GridField(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return GridField(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridField(self.grid, -self.values)


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of a real :class:`GridField`."""

    grid: TorusGrid
    coeffs: np.ndarray

    def coefficient(self, k: Sequence[int]) -> complex:
        """Coefficient at integer wavevector ``k`` (components in [-N/2, N/2))."""
        idx = tuple(int(kd) % self.grid.n for kd in k)
        return complex(self.coeffs[idx])

    def is_conjugate_symmetric(self, atol: float = 1e-12) -> bool:
        flipped = np.conj(self.coeffs)
        for ax in range(self.grid.dim):
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        scale = max(np.abs(self.coeffs).max(), 1.0)
        return bool(np.abs(self.coeffs - flipped).max() <= atol * scale)

    def weighted_norm_sq(self) -> float:
        """``(2pi)^m * sum |c_k|^2``; equals the squared L2 norm of the field."""
        return float(self.grid.volume * np.sum(np.abs(self.coeffs) ** 2))


def forward_transform(f: GridField) -> SpectralField:
    return SpectralField(f.grid, np.fft.fftn(f.values) / f.grid.size)


def inverse_transform(F: SpectralField) -> GridField:
    return GridField(F.grid, np.fft.ifftn(F.coeffs * F.grid.size).real)


def apply_multiplier(f: GridField, multiplier: np.ndarray) -> GridField:
    vals = np.fft.ifftn(np.fft.fftn(f.values) * multiplier).real
    return GridField(f.grid, vals)


def partial(f: GridField, orders: Sequence[int]) -> GridField:
    """Mixed partial derivative; ``orders[d]`` is the order along axis d."""
    grid = f.grid
    if len(orders) != grid.dim:
        raise ValueError("need one derivative order per axis")
    mult = np.ones(grid.shape, dtype=complex)
    for kd_full, kd_cut, p in zip(
        grid.wavevectors(), grid.wavevectors(drop_nyquist=True), orders
    ):
        if p:
            kd = kd_cut if p % 2 else kd_full
            mult = mult * (1j * kd) ** p
    return apply_multiplier(f, mult)


def gradient(f: GridField) -> list[GridField]:
    grid = f.grid
    F = np.fft.fftn(f.values)
    return [
        GridField(grid, np.fft.ifftn(1j * kd * F).real)
        for kd in grid.wavevectors(drop_nyquist=True)
    ]


def laplacian(f: GridField) -> GridField:
    return apply_multiplier(f, -f.grid.k_squared())


def multi_indices(dim: int, order: int):
    """Yield ``(alpha, multiplicity)`` over multi-indices with ``|alpha| = order``.

    The multiplicity counts the ordered index tuples that collapse onto alpha,
    so ``sum multiplicity * (d^alpha f)^2`` is the flat-metric ``|grad^order f|^2``.
    """
    from math import factorial

    for alpha in product(range(order + 1), repeat=dim):
        if sum(alpha) != order:
            continue
        mult = factorial(order)
        for a in alpha:
            mult //= factorial(a)
        yield alpha, mult


def random_band_limited(
    grid: TorusGrid,
    bandwidth: int,
    rng: np.random.Generator,
    decay: float = 0.0,
    amplitude: float = 1.0,
) -> GridField:
    """Random real trigonometric polynomial with ``|k|_inf <= bandwidth``.

    Coefficient magnitudes scale like ``(1 + |k|^2)^(-decay/2)``.
    """
    if bandwidth >= grid.n // 2:
        raise ValueError("bandwidth must stay below the Nyquist wavenumber")
    coeffs = np.zeros(grid.shape, dtype=complex)
    band = [kd for kd in grid.wavevectors()]
    mask = np.ones(grid.shape, dtype=bool)
    for kd in band:
        mask &= np.abs(kd) <= bandwidth
    noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    weight = (1.0 + grid.k_squared()) ** (-decay / 2.0)
    coeffs[mask] = (noise * weight)[mask]
    # Hermitian projection makes the field real
    flipped = np.conj(coeffs)
    for ax in range(grid.dim):
        flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
    coeffs = 0.5 * (coeffs + flipped)
    vals = np.fft.ifftn(coeffs * grid.size).real
    scale = np.abs(vals).max()
    if scale > 0:
        vals = vals * (amplitude / scale)
    return GridField(grid, vals)


@dataclass(frozen=True)
class SpaceTimeField:
    """One :class:`GridField` per time node on ``M x [0, T]``.

    ``values`` has shape ``(len(times), *grid.shape)``.
    """

    grid: TorusGrid
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise FieldError("need at least two time nodes")
        if np.any(np.diff(times) <= 0):
            raise FieldError("time nodes must be strictly increasing")
        values = np.asarray(self.values, dtype=float)
        want = (times.size, *self.grid.shape)
        if values.shape != want:
            if values.size != np.prod(want):
                raise FieldError(f"expected shape {want}, got {values.shape}")
            values = values.reshape(want)
        _check_finite(values, "SpaceTimeField")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(
        cls, grid: TorusGrid, times: np.ndarray, fn: Callable[..., np.ndarray]
    ) -> "SpaceTimeField":
        times = np.asarray(times, dtype=float)
        mesh = grid.mesh()
        vals = np.empty((times.size, *grid.shape))
        for i, t in enumerate(times):
            vals[i] = np.broadcast_to(fn(*mesh, t), grid.shape)
        return cls(grid, times, vals)

    @classmethod
    def from_fields(cls, times, fields: Sequence[GridField]) -> "SpaceTimeField":
        grid = fields[0].grid
        return cls(grid, times, np.stack([f.values for f in fields]))

    @property
    def n_nodes(self) -> int:
        return self.times.size

    @property
    def is_uniform(self) -> bool:
        dt = np.diff(self.times)
        return bool(np.allclose(dt, dt[0], rtol=1e-9, atol=1e-14))

    @property
    def dt(self) -> float:
        if not self.is_uniform:
            raise FieldError("time nodes are not uniform")
        return float(self.times[1] - self.times[0])

    def at(self, i: int) -> GridField:
        return GridField(self.grid, self.values[i])

    def __iter__(self):
        for i in range(self.n_nodes):
            yield self.at(i)

    def with_values(self, values: np.ndarray) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, self.times, values)

    def slice_nodes(self, sl: slice) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, self.times[sl], self.values[sl])

    def interpolate(self, t: float | np.ndarray) -> np.ndarray:
        """Linear interpolation in time; returns raw sample arrays."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        lo, hi = self.times[0], self.times[-1]
        span = hi - lo
        if np.any(t < lo - 1e-12 * span) or np.any(t > hi + 1e-12 * span):
            raise ValueError(f"time outside [{lo}, {hi}]")
        j = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.n_nodes - 2)
        w = (t - self.times[j]) / (self.times[j + 1] - self.times[j])
        w = w.reshape((-1,) + (1,) * self.grid.dim)
        out = (1.0 - w) * self.values[j] + w * self.values[j + 1]
        return out[0] if scalar else out

    def resample(self, times: np.ndarray) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, times, self.interpolate(times))


def time_derivative(u: SpaceTimeField, order: int = 1) -> SpaceTimeField:
    """Finite differences in t: central inside, one-sided second order at ends.

    Order 2 uses the three-point second-difference stencil and needs uniform
    nodes; higher orders repeat the first-order stencil.
    """
    if order < 0:
        raise ValueError("order must be nonnegative")
    if order == 0:
        return u
    if u.n_nodes < order + 2:
        raise ValueError(f"order {order} needs at least {order + 2} time nodes")
    if order == 2:
        dt = u.dt
        v = u.values
        out = np.empty_like(v)
        out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dt**2
        out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / dt**2
        out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / dt**2
        return u.with_values(out)
    out = u.values
    for _ in range(order):
        out = np.gradient(out, u.times, axis=0, edge_order=2)
    return u.with_values(out)


def spatial_map(u: SpaceTimeField, op: Callable[[GridField], GridField]) -> SpaceTimeField:
    """Apply a spatial operator node by node."""
    return u.with_values(np.stack([op(f).values for f in u]))
