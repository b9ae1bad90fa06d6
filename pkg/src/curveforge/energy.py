r"""Energy functionals of the nonlinear wave equation and Gronwall diagnostics.

For a solution ``u`` and a frozen coefficient field ``v`` on the flat
``m``-torus,

.. math::

    E_1^{(l)} = \tfrac12\int |\nabla^l u|^2 + m e^{2(m+1)v} |\nabla^{l-1}u_t|^2,
    \qquad
    E_2^{(l)} = \tfrac12\int e^{-2(m+1)v}|\nabla^l u|^2 + m |\nabla^{l-1}u_t|^2,

    E_s = \sum_{l=1}^{s} (E_1^{(l)} + E_2^{(l)}) + \tfrac12 \int u^2 .

Since :math:`1 + e^{\pm x} \ge 1`,
:math:`E_s \ge \tfrac12\|u\|_{H^s}^2 + \tfrac m2 \|u_t\|_{H^{s-1}}^2`, and
Cauchy-Schwarz with weights ``(1, 1/m)`` gives

.. math::

    \|u\|_{H^s} + \|u_t\|_{H^{s-1}} \le \sqrt{2(1 + 1/m)}\, E_s^{1/2}

for every ``v``.  :func:`norm_energy_bridge` checks against this constant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .norms import derivative_density, sobolev_norm
from .torus import GridField, SpaceTimeField, time_derivative

GRONWALL_SLACK = 1.05
GRONWALL_DELTA = 1e-14


def _check_l(l: int) -> None:
    if l < 1:
        raise ValueError(f"energy level l must be >= 1, got {l}")


def energy_components(u: GridField, u_t: GridField, v: GridField | None, l: int, m: int):
    """``(E_1^{(l)}, E_2^{(l)})`` at one time."""
    _check_l(l)
    if u.grid.n // 2 < l:
        raise ValueError(f"level {l} is not resolvable on N = {u.grid.n}")
    grad_u = derivative_density(u, l)
    grad_ut = derivative_density(u_t, l - 1)
    w = 2.0 * (m + 1) * (v.values if v is not None else 0.0)
    dv = u.grid.cell_volume
    e1 = 0.5 * np.sum(grad_u + m * np.exp(w) * grad_ut) * dv
    e2 = 0.5 * np.sum(np.exp(-w) * grad_u + m * grad_ut) * dv
    return float(e1), float(e2)


def total_energy(u: GridField, u_t: GridField, v: GridField | None, s: int, m: int) -> float:
    _check_l(s)
    total = 0.5 * float(np.sum(u.values**2)) * u.grid.cell_volume
    for l in range(1, s + 1):
        total += sum(energy_components(u, u_t, v, l, m))
    return total


def bridge_constant(m: int) -> float:
    return math.sqrt(2.0 * (1.0 + 1.0 / m))


@dataclass(frozen=True)
class BridgeResult:
    lhs: float
    sqrt_energy: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.sqrt_energy if self.sqrt_energy > 0 else 0.0

    @property
    def holds(self) -> bool:
        return self.lhs <= self.bound * self.sqrt_energy * (1 + 1e-12) + 1e-300


def norm_energy_bridge(u: GridField, u_t: GridField, v: GridField | None, s: int, m: int) -> BridgeResult:
    """``||u||_{H^s} + ||u_t||_{H^{s-1}}`` next to ``E_s^{1/2}``."""
    lhs = sobolev_norm(u, s) + sobolev_norm(u_t, s - 1)
    root = math.sqrt(total_energy(u, u_t, v, s, m))
    if root == 0.0 and lhs > 0.0:
        raise ArithmeticError("zero energy for a nonzero field: quadrature is broken")
    return BridgeResult(lhs, root, bridge_constant(m))


def data_quantity_As(R_tilde, R_g=None, s: int = 2) -> float:
    """``||R~||_{H^{s-1}} + ||R_g||_{H^{s-1}}``; space-time inputs use the time sup."""

    def norm(f):
        if f is None:
            return 0.0
        if isinstance(f, SpaceTimeField):
            return max(sobolev_norm(g, s - 1) for g in f)
        return sobolev_norm(f, s - 1)

    return norm(R_tilde) + norm(R_g)


@dataclass
class EnergyTrace:
    """Per-node energies; ``E1[:, l-1]`` and ``E2[:, l-1]`` hold level ``l``."""

    times: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    mass: np.ndarray
    A_s: float | np.ndarray = 0.0

    @property
    def Es(self) -> np.ndarray:
        return self.E1.sum(axis=1) + self.E2.sum(axis=1) + self.mass

    @property
    def sqrt_Es(self) -> np.ndarray:
        return np.sqrt(self.Es)

    @property
    def s(self) -> int:
        return self.E1.shape[1]

    def to_rows(self) -> tuple[list[str], np.ndarray]:
        """Header and table: t, E1 per level, E2 per level, E_s, sqrt(E_s), running rate."""
        header = ["t"]
        header += [f"E1_{l}" for l in range(1, self.s + 1)]
        header += [f"E2_{l}" for l in range(1, self.s + 1)]
        header += ["E_s", "sqrt_E_s", "rate_running_max"]
        rates = running_rate(self)
        table = np.column_stack([self.times, self.E1, self.E2, self.Es, self.sqrt_Es, rates])
        return header, table


def energy_trace(u: SpaceTimeField, v: SpaceTimeField | None, s: int, m: int,
                 u_t: SpaceTimeField | None = None, R_tilde=None, R_g=None) -> EnergyTrace:
    """Energies at every node of ``u``; ``v`` defaults to zero."""
    if u_t is None:
        u_t = time_derivative(u, 1)
    E1 = np.zeros((u.n_nodes, s))
    E2 = np.zeros((u.n_nodes, s))
    mass = 0.5 * np.sum(u.values**2, axis=tuple(range(1, u.values.ndim))) * u.grid.cell_volume
    for i in range(u.n_nodes):
        ui, uti = u.at(i), u_t.at(i)
        vi = v.at(i) if v is not None else None
        for l in range(1, s + 1):
            E1[i, l - 1], E2[i, l - 1] = energy_components(ui, uti, vi, l, m)
    if isinstance(R_tilde, SpaceTimeField):
        A = np.array([data_quantity_As(R_tilde.at(i), R_g, s) for i in range(R_tilde.n_nodes)])
    elif R_tilde is None and R_g is None:
        A = 0.0
    else:
        A = data_quantity_As(R_tilde, R_g, s)
    return EnergyTrace(np.asarray(u.times, dtype=float).copy(), E1, E2, mass, A)


def _rate_samples(times, root, A) -> np.ndarray:
    deriv = np.gradient(root, times, edge_order=2)
    return deriv / (A + root + GRONWALL_DELTA)


def running_rate(trace: EnergyTrace) -> np.ndarray:
    """Running max of the interior rate samples (zero at the first node)."""
    if trace.times.size < 3:
        return np.zeros(trace.times.size)
    A = np.broadcast_to(trace.A_s, trace.times.shape)
    samples = _rate_samples(trace.times, trace.sqrt_Es, A)
    samples[0] = samples[-1] = 0.0
    return np.maximum(np.maximum.accumulate(samples), 0.0)


@dataclass(frozen=True)
class GronwallResult:
    rate: float
    passed: bool
    margin: float


def gronwall_check(trace: EnergyTrace, A_s: float | np.ndarray | None = None) -> GronwallResult:
    """Integrated Gronwall test with the empirical rate.

    ``rate = max_interior d/dt sqrt(E_s) / (A_s + sqrt(E_s) + delta)``
    (clamped at zero), and the check is
    ``sqrt(E_s(t)) <= (sqrt(E_s(0)) + A) exp(1.05 rate t) - A`` at every
    node, with ``A`` the largest data quantity.  ``margin`` is the
    smallest gap between bound and trace.
    """
    if trace.times.size < 3:
        raise ValueError("Gronwall check needs at least 3 nodes")
    A = trace.A_s if A_s is None else A_s
    A_nodes = np.broadcast_to(np.asarray(A, dtype=float), trace.times.shape)
    root = trace.sqrt_Es
    rate = max(float(_rate_samples(trace.times, root, A_nodes)[1:-1].max()), 0.0)
    A_max = float(A_nodes.max())
    t = trace.times - trace.times[0]
    with np.errstate(over="ignore"):
        bound = (root[0] + A_max) * np.exp(GRONWALL_SLACK * rate * t) - A_max
    scale = max(float(root.max()), A_max, 1.0)
    gap = bound - root
    passed = bool(np.all(gap >= -1e-12 * scale))
    return GronwallResult(rate, passed, float(gap.min()))


def doubling_time(trace: EnergyTrace) -> float | None:
    """First node time at which ``sqrt(E_s)`` reaches twice its initial value."""
    root = trace.sqrt_Es
    if root[0] <= 0:
        return None
    hit = np.nonzero(root >= 2.0 * root[0])[0]
    return float(trace.times[hit[0]]) if hit.size else None
