r"""Picard iteration for the prescribed-curvature equation with ``n = 1``.

On :math:`T^m \times [0, T]` with flat base, the deformation
:math:`e^{2u}g + e^{-2mu}dt^2` has scalar curvature

.. math::

    \mathcal R(u) = e^{-2u}R_g + 2e^{-2u}\Delta u - 2m e^{2mu}u_{tt}
        - (m^2+m+2)e^{-2u}|\nabla u|^2 - m(3m+1)e^{2mu}u_t^2 .

Multiplying :math:`\mathcal R(u) = \tilde R` by :math:`-e^{-2mu}/2` gives the
wave form :math:`m u_{tt} - e^{-2(m+1)u}\Delta u = F(u, u)` with

.. math::

    F(u, v) = \tfrac12\big[-e^{-2mv}\tilde R + e^{-2(m+1)v}R_g
        - (m^2+m+2)e^{-2(m+1)v}\langle\nabla v,\nabla u\rangle
        - m(3m+1) v_t u_t\big].

Freezing ``v = u_n`` and dividing by ``m`` turns each step into a linear
equation :math:`u_{tt} + a u_t - (\alpha\Delta u + \langle\nabla\beta,\nabla u\rangle) = f`.
The drift fits that shape because
:math:`e^{-2(m+1)v}\nabla v = -\nabla e^{-2(m+1)v} / (2(m+1))`, so

.. math::

    a = \tfrac{3m+1}{2} v_t,\quad \alpha = \tfrac{e^{-2(m+1)v}}{m},\quad
    \beta = \tfrac{m^2+m+2}{4m(m+1)} e^{-2(m+1)v},\quad \gamma = 0,\quad
    f = \tfrac{-e^{-2mv}\tilde R + e^{-2(m+1)v}R_g}{2m}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.stats import linregress

from .energy import EnergyTrace, energy_trace, total_energy
from .galerkin import (
    GalerkinBasis,
    LinearCoefficients,
    StabilityError,
    assemble_system,
    solve_galerkin,
    stability_bound,
)
from .norms import sobolev_norm
from .torus import (
    GridField,
    SpaceTimeField,
    TorusGrid,
    gradient,
    laplacian,
    random_band_limited,
    spatial_map,
    time_derivative,
)


class PicardDivergence(RuntimeError):
    """The iteration failed to contract; carries the report of the last attempt."""

    def __init__(self, message: str, report: "IterationReport"):
        super().__init__(message)
        self.report = report


# --- pointwise evaluators ------------------------------------------------------


def _grad_dot(u: SpaceTimeField, v: SpaceTimeField) -> np.ndarray:
    out = np.empty_like(u.values)
    for i, (ui, vi) in enumerate(zip(u, v)):
        out[i] = sum(a.values * b.values for a, b in zip(gradient(ui), gradient(vi)))
    return out


def _lap(u: SpaceTimeField) -> np.ndarray:
    return spatial_map(u, laplacian).values


def _values(R, u: SpaceTimeField) -> np.ndarray | float:
    """Samples of a curvature input on the nodes of ``u``."""
    if R is None:
        return 0.0
    if np.isscalar(R):
        return float(R)
    if isinstance(R, SpaceTimeField):
        if R.grid != u.grid:
            raise ValueError("curvature field is on a different grid")
        if R.n_nodes == u.n_nodes and np.allclose(R.times, u.times, rtol=0, atol=1e-12):
            return R.values
        return R.interpolate(u.times)
    if isinstance(R, GridField):
        return R.values
    if callable(R):
        return SpaceTimeField.from_function(u.grid, u.times, R).values
    raise TypeError(f"unsupported curvature input {type(R).__name__}")


def prescribed_curvature(u: SpaceTimeField, m: int, R_g=None, u_t: SpaceTimeField | None = None,
                         u_tt: SpaceTimeField | None = None) -> SpaceTimeField:
    """Scalar curvature of ``e^{2u}g + e^{-2mu}dt^2`` for flat-torus ``g``."""
    u_t = u_t if u_t is not None else time_derivative(u, 1)
    u_tt = u_tt if u_tt is not None else time_derivative(u, 2)
    U = u.values
    em, e1 = np.exp(2.0 * m * U), np.exp(-2.0 * U)
    vals = (
        e1 * _values(R_g, u)
        + 2.0 * e1 * _lap(u)
        - 2.0 * m * em * u_tt.values
        - (m * m + m + 2) * e1 * _grad_dot(u, u)
        - m * (3 * m + 1) * em * u_t.values**2
    )
    return u.with_values(vals)


def residual(u: SpaceTimeField, R_tilde, m: int, R_g=None, u_t: SpaceTimeField | None = None,
             u_tt: SpaceTimeField | None = None) -> SpaceTimeField:
    """``R(u) - R~`` on the interior time nodes."""
    full = prescribed_curvature(u, m, R_g, u_t, u_tt)
    diff = full.values - _values(R_tilde, u)
    return full.with_values(diff).slice_nodes(slice(1, -1))


def rhs_F(u: SpaceTimeField, v: SpaceTimeField, R_tilde, m: int, R_g=None,
          u_t: SpaceTimeField | None = None, v_t: SpaceTimeField | None = None) -> SpaceTimeField:
    u_t = u_t if u_t is not None else time_derivative(u, 1)
    v_t = v_t if v_t is not None else time_derivative(v, 1)
    V = v.values
    ew = np.exp(-2.0 * (m + 1) * V)
    vals = 0.5 * (
        -np.exp(-2.0 * m * V) * _values(R_tilde, u)
        + ew * _values(R_g, u)
        - (m * m + m + 2) * ew * _grad_dot(v, u)
        - m * (3 * m + 1) * v_t.values * u_t.values
    )
    return u.with_values(vals)


def linearize_step(u_n: SpaceTimeField, R_tilde, m: int, R_g=None,
                   u_n_t: SpaceTimeField | None = None) -> LinearCoefficients:
    """Coefficients of the linear step with ``u_n`` frozen (see module docstring)."""
    u_n_t = u_n_t if u_n_t is not None else time_derivative(u_n, 1)
    V = u_n.values
    ew = np.exp(-2.0 * (m + 1) * V)
    f = (-np.exp(-2.0 * m * V) * _values(R_tilde, u_n) + ew * _values(R_g, u_n)) / (2.0 * m)
    f = np.broadcast_to(f, V.shape)
    return LinearCoefficients(
        a=u_n.with_values(0.5 * (3 * m + 1) * u_n_t.values),
        alpha=u_n.with_values(ew / m),
        beta=u_n.with_values((m * m + m + 2) / (4.0 * m * (m + 1)) * ew),
        gamma=u_n.with_values(np.zeros_like(V)),
        f=u_n.with_values(np.array(f)),
    )


# --- configuration and reports -----------------------------------------------------


def default_sobolev_index(m: int, k: int = 2) -> int:
    return int(math.floor(m / 2 + k + 1))


def default_bound(E_s0: float) -> float:
    return 2.0 * math.sqrt(2.0) * (1.0 + math.sqrt(E_s0)) + 1.0


@dataclass(frozen=True)
class PicardConfig:
    """Settings of one Picard run.

    ``kappa`` defaults to ``N/4`` and ``dt`` to ``1e-3`` (checked against the
    stability bound at every iterate);
    solution nodes coincide with integrator steps.
    """

    s: int | None = None
    k: int = 2
    D: float | None = None
    t0: float = 0.5
    max_iters: int = 40
    tol: float = 1e-8
    adaptive: bool = True
    kappa: int | None = None
    dt: float | None = None
    min_t0: float = 1e-3
    R_g: float = 0.0
    divergence_cap: float = 1e6
    seed_amplitude: float = 0.0
    seed: int = 0

    def resolved(self, grid: TorusGrid) -> "PicardConfig":
        m = grid.dim
        s = self.s if self.s is not None else default_sobolev_index(m, self.k)
        if s < m // 2 + 2:
            raise ValueError(f"s = {s} must be at least floor(m/2) + 2 = {m // 2 + 2}")
        if s + 1 > grid.n // 2:
            raise ValueError(f"s + 1 = {s + 1} exceeds the resolvable order on N = {grid.n}")
        kappa = self.kappa if self.kappa is not None else max(grid.n // 4, 1)
        if kappa >= grid.n // 2:
            raise ValueError(f"cutoff {kappa} is not resolvable on N = {grid.n}")
        for name in ("t0", "tol", "min_t0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 2:
            raise ValueError("max_iters must be at least 2")
        if self.D is not None and self.D <= 0:
            raise ValueError("D must be positive")
        return replace(self, s=s, kappa=kappa)


@dataclass
class IterationReport:
    d: list[float] = field(default_factory=list)
    bound_norms: list[float] = field(default_factory=list)
    bound_held: list[bool] = field(default_factory=list)
    sqrt_energy: list[list[float]] = field(default_factory=list)
    t0_history: list[float] = field(default_factory=list)
    events: list[str] = field(default_factory=list)
    converged: bool = False

    @property
    def ratios(self) -> list[float]:
        return [b / a for a, b in zip(self.d[:-1], self.d[1:]) if a > 0]

    def geometric_fit_r2(self, floor: float = 1e-13) -> float | None:
        """R^2 of a line through ``log d_n``; entries at the rounding floor are left out."""
        logs = [(i, math.log(x)) for i, x in enumerate(self.d) if x > floor]
        if len(logs) < 3:
            return None
        i, y = zip(*logs)
        return float(linregress(i, y).rvalue ** 2)

    def bound_propagation(self) -> list[tuple[bool, bool]]:
        return list(zip(self.bound_held[:-1], self.bound_held[1:]))

    def as_dict(self) -> dict:
        return {
            "d": self.d,
            "ratios": self.ratios,
            "geometric_fit_r2": self.geometric_fit_r2(),
            "bound_norms": self.bound_norms,
            "bound_held": self.bound_held,
            "t0_history": self.t0_history,
            "events": self.events,
            "converged": self.converged,
        }


@dataclass
class NonlinearSolution:
    u: SpaceTimeField
    u_t: SpaceTimeField
    residual: SpaceTimeField
    report: IterationReport
    config: PicardConfig
    t0: float
    D: float
    E_s0: float
    energy: EnergyTrace
    R_tilde: SpaceTimeField

    @property
    def max_residual(self) -> float:
        return float(np.abs(self.residual.values).max())

    def sup_norm(self) -> float:
        """``sup_t (||u||_{H^s} + ||u_t||_{H^{s-1}})``."""
        s = self.config.s
        return max(sobolev_norm(a, s) + sobolev_norm(b, s - 1) for a, b in zip(self.u, self.u_t))


# --- the iteration ---------------------------------------------------------------------


def _iterate_gap(u1, u1t, u0, u0t, s: int) -> float:
    du = u1.values - u0.values
    dut = u1t.values - u0t.values
    g = u1.grid
    a = max(sobolev_norm(GridField(g, x), s) for x in du)
    b = max(sobolev_norm(GridField(g, x), s - 1) for x in dut)
    return a + b


def _bound_norm(u, u_t, s: int) -> float:
    return max(sobolev_norm(a, s + 1) + sobolev_norm(b, s) for a, b in zip(u, u_t))


def _node_times(t0: float, dt: float) -> tuple[np.ndarray, float]:
    steps = max(2, math.ceil(t0 / dt - 1e-9))
    return np.linspace(0.0, t0, steps + 1), t0 / steps


def _sample_curvature(R_tilde, grid: TorusGrid, times: np.ndarray) -> SpaceTimeField:
    if isinstance(R_tilde, SpaceTimeField):
        if R_tilde.times[-1] < times[-1] - 1e-12:
            raise ValueError(
                f"prescribed curvature covers [0, {R_tilde.times[-1]}], need [0, {times[-1]}]"
            )
        return SpaceTimeField(grid, times, R_tilde.interpolate(times))
    if isinstance(R_tilde, GridField):
        return SpaceTimeField(grid, times, np.broadcast_to(R_tilde.values, (times.size, *grid.shape)))
    if np.isscalar(R_tilde):
        return SpaceTimeField(grid, times, np.full((times.size, *grid.shape), float(R_tilde)))
    if callable(R_tilde):
        return SpaceTimeField.from_function(grid, times, R_tilde)
    raise TypeError(f"unsupported curvature input {type(R_tilde).__name__}")


def _seed(grid: TorusGrid, times: np.ndarray, cfg: PicardConfig):
    zero = np.zeros((times.size, *grid.shape))
    if cfg.seed_amplitude == 0.0:
        f = SpaceTimeField(grid, times, zero)
        return f, f
    rng = np.random.default_rng(cfg.seed)
    r = random_band_limited(grid, min(3, grid.n // 2 - 1), rng, amplitude=cfg.seed_amplitude)
    u = SpaceTimeField(grid, times, zero + r.values)
    return u, SpaceTimeField(grid, times, zero)


def _attempt(R, phi, psi, cfg: PicardConfig, t0: float, D: float, report: IterationReport):
    """One Picard run on ``[0, t0]``; returns ``(status, u, u_t)``."""
    grid = phi.grid
    m = grid.dim
    dt_req = cfg.dt if cfg.dt is not None else 1e-3
    times, dt = _node_times(t0, dt_req)
    Rs = _sample_curvature(R, grid, times)
    u, u_t = _seed(grid, times, cfg)
    basis = GalerkinBasis(grid, cfg.kappa)
    streak = 0
    for _ in range(cfg.max_iters):
        try:
            coeffs = linearize_step(u, Rs, m, cfg.R_g, u_t)
            if dt > stability_bound(coeffs.L, cfg.kappa) * (1 + 1e-12):
                raise StabilityError(
                    f"dt = {dt:g} exceeds stability bound {stability_bound(coeffs.L, cfg.kappa):g}"
                )
            system = assemble_system(coeffs, basis)
            sol = solve_galerkin(coeffs, phi, psi, cfg.kappa, dt=dt, out_times=times, system=system)
        except (StabilityError, ValueError) as exc:
            report.events.append(f"t0={t0:g}: linear step failed ({exc})")
            return "diverged", u, u_t
        d = _iterate_gap(sol.u, sol.u_t, u, u_t, cfg.s)
        bnorm = _bound_norm(sol.u, sol.u_t, cfg.s)
        report.d.append(d)
        report.bound_norms.append(bnorm)
        report.bound_held.append(bool(bnorm <= D))
        tr = energy_trace(sol.u, u, cfg.s, m, u_t=sol.u_t)
        report.sqrt_energy.append(tr.sqrt_Es.tolist())
        u, u_t = sol.u, sol.u_t
        if not math.isfinite(d) or d > cfg.divergence_cap:
            report.events.append(f"t0={t0:g}: iterate gap {d:g} exceeds cap")
            return "diverged", u, u_t
        if d < cfg.tol:
            return "converged", u, u_t
        if bnorm > D:
            report.events.append(f"t0={t0:g}: bound D={D:g} violated ({bnorm:g})")
            if cfg.adaptive:
                return "bound", u, u_t
        ratios = report.ratios
        if len(report.d) >= 2 and ratios and ratios[-1] >= 0.95:
            streak += 1
        else:
            streak = 0
        if streak >= 2 and cfg.adaptive:
            report.events.append(f"t0={t0:g}: contraction ratio >= 0.95 twice")
            return "slow", u, u_t
        if streak >= 3:
            report.events.append(f"t0={t0:g}: no contraction")
            return "diverged", u, u_t
    report.events.append(f"t0={t0:g}: max_iters reached")
    return "exhausted", u, u_t


def picard_solve(R_tilde, phi: GridField, psi: GridField, cfg: PicardConfig | None = None,
                 raise_on_failure: bool = True) -> NonlinearSolution:
    """Iterate linear solves from ``u_1 = 0`` (or a seeded start) until the
    iterate gap drops below ``cfg.tol``.

    With ``cfg.adaptive`` the window ``t0`` is halved after slow contraction,
    a broken ``D`` bound or divergence.
    """
    cfg = (cfg or PicardConfig()).resolved(phi.grid)
    if psi.grid != phi.grid:
        raise ValueError("phi and psi live on different grids")
    m = phi.grid.dim
    E_s0 = total_energy(phi, psi, phi, cfg.s, m)
    D = cfg.D if cfg.D is not None else default_bound(E_s0)
    t0 = cfg.t0
    t0_history: list[float] = []
    events: list[str] = []
    while True:
        t0_history.append(t0)
        report = IterationReport(t0_history=list(t0_history), events=events)
        status, u, u_t = _attempt(R_tilde, phi, psi, cfg, t0, D, report)
        if status == "converged":
            report.converged = True
            break
        if cfg.adaptive and t0 / 2 >= cfg.min_t0:
            t0 /= 2
            continue
        if raise_on_failure:
            raise PicardDivergence(f"no contraction at t0 = {t0:g} ({status})", report)
        break
    Rs = _sample_curvature(R_tilde, phi.grid, u.times)
    u_tt = time_derivative(u_t, 1)
    res = residual(u, Rs, m, cfg.R_g, u_t=u_t, u_tt=u_tt)
    energy = energy_trace(u, u, cfg.s, m, u_t=u_t, R_tilde=Rs, R_g=None)
    return NonlinearSolution(u, u_t, res, report, cfg, t0, D, E_s0, energy, Rs)


def small_data_solve(R_tilde, grid: TorusGrid, T: float, cfg: PicardConfig | None = None,
                     raise_on_failure: bool = True) -> NonlinearSolution:
    """Zero data, flat base, the whole interval ``[0, T]`` without windowing."""
    cfg = replace(cfg or PicardConfig(), t0=T, adaptive=False, R_g=0.0)
    zero = GridField.constant(grid, 0.0)
    return picard_solve(R_tilde, zero, zero, cfg, raise_on_failure=raise_on_failure)


@dataclass
class ThresholdReport:
    epsilon: float
    failed_at: float | None
    history: list[tuple[float, bool]]


def smallness_threshold(shape: Callable, grid: TorusGrid, T: float, cfg: PicardConfig | None = None,
                        lo: float = 1e-3, hi: float | None = None, steps: int = 8,
                        max_amplitude: float = 1e3) -> ThresholdReport:
    """Largest amplitude ``eps`` for which ``eps * shape`` still converges.

    Starts from ``lo`` (must converge), grows by doubling until failure
    unless ``hi`` is given, then bisects.
    """

    def ok(amp: float) -> bool:
        try:
            sol = small_data_solve(lambda *a: amp * shape(*a), grid, T, cfg, raise_on_failure=True)
        except PicardDivergence:
            return False
        return sol.report.converged

    history = []
    if not ok(lo):
        history.append((lo, False))
        return ThresholdReport(0.0, lo, history)
    history.append((lo, True))
    if hi is None:
        hi = 2 * lo
        while hi <= max_amplitude:
            good = ok(hi)
            history.append((hi, good))
            if not good:
                break
            lo, hi = hi, 2 * hi
        else:
            return ThresholdReport(lo, None, history)
    else:
        good = ok(hi)
        history.append((hi, good))
        if good:
            return ThresholdReport(hi, None, history)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        good = ok(mid)
        history.append((mid, good))
        if good:
            lo = mid
        else:
            hi = mid
    return ThresholdReport(lo, hi, history)


# --- empirical uniqueness ------------------------------------------------------------


def _c0_gap(a: SpaceTimeField, b: SpaceTimeField) -> float:
    """Max difference on the nodes the two runs share."""
    common, ia, ib = np.intersect1d(np.round(a.times, 12), np.round(b.times, 12), return_indices=True)
    if common.size < 2:
        raise ValueError("variants share fewer than two time nodes")
    return float(np.abs(a.values[ia] - b.values[ib]).max())


@dataclass
class UniquenessReport:
    levels: list[dict[str, float]]
    converged: bool

    @property
    def max_gap(self) -> float:
        return max(self.levels[-1].values()) if self.levels else float("nan")

    def shrinking(self, floor: float = 1e-10) -> bool:
        if len(self.levels) < 2:
            return True
        a, b = self.levels[-2], self.levels[-1]
        return all(b[k] <= a[k] or b[k] < floor for k in b)


def uniqueness_probe(R_tilde, phi: GridField, psi: GridField, cfg: PicardConfig | None = None,
                     levels: int = 2, seed_amplitude: float = 1e-2,
                     tol_factor: float = 1e-2,
                     on_solution: Callable[[str, NonlinearSolution], None] | None = None,
                     ) -> UniquenessReport:
    """Re-solve with doubled cutoff, halved step and a random seed.

    Each level halves the base step and multiplies the fixed-point
    tolerance by ``tol_factor`` (the seed variant can only agree with the
    base run up to that tolerance).  Pairwise C0 gaps between the base run
    and its three variants are recorded per level.  ``on_solution`` sees
    every convergent run.
    """
    base_cfg = (cfg or PicardConfig()).resolved(phi.grid)
    base_cfg = replace(base_cfg, adaptive=False)
    dt0 = base_cfg.dt if base_cfg.dt is not None else 1e-3
    out, all_ok = [], True
    for lev in range(levels):
        c = replace(base_cfg, dt=dt0 / 2**lev, tol=base_cfg.tol * tol_factor**lev)
        variants = {
            "base": c,
            "cutoff": replace(c, kappa=min(2 * c.kappa, phi.grid.n // 2 - 1)),
            "step": replace(c, dt=c.dt / 2),
            "seed": replace(c, seed_amplitude=seed_amplitude, seed=lev + 1),
        }
        sols = {}
        for name, vc in variants.items():
            try:
                sols[name] = picard_solve(R_tilde, phi, psi, vc)
                if on_solution is not None:
                    on_solution(f"level{lev}-{name}", sols[name])
            except PicardDivergence:
                all_ok = False
        if "base" not in sols:
            out.append({k: float("inf") for k in ("cutoff", "step", "seed")})
            continue
        row = {}
        for name in ("cutoff", "step", "seed"):
            row[name] = _c0_gap(sols["base"].u, sols[name].u) if name in sols else float("inf")
        out.append(row)
    return UniquenessReport(out, all_ok)
