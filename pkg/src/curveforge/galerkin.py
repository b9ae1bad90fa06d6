r"""Faedo-Galerkin solver for the linear hyperbolic equation

.. math::

    u_{tt} + a u_t - (\alpha \Delta u + \langle\nabla\beta, \nabla u\rangle + \gamma u) = f,
    \qquad u(0) = \varphi,\; u_t(0) = \psi

on the flat torus.  The trial space is spanned by real Fourier modes
(``1``, ``cos(k.x)``, ``sin(k.x)``, normalised in :math:`L^2`), which are
eigenfunctions of :math:`-\Delta` with eigenvalue :math:`|k|^2`.  Writing
:math:`u_n = \sum \eta_i w_i` and testing against each :math:`w_j` gives

.. math::

    \eta'' + B(t)\eta' + A(t)\eta = F(t),

    B_{ji} = (a w_i, w_j),\quad
    A_{ji} = (\alpha\lambda_i w_i - \langle\nabla\beta,\nabla w_i\rangle - \gamma w_i, w_j),\quad
    F_j = (f, w_j).

The matrices depend linearly on the coefficient fields, so interpolating
the coefficients linearly in time is the same as interpolating matrices
assembled at the coefficient nodes.  That is what the integrator does.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .norms import sobolev_norm
from .torus import GridField, SpaceTimeField, TorusGrid, gradient, laplacian, time_derivative

STABILITY_CONSTANT = 0.5


class StabilityError(ValueError):
    """Requested step exceeds the explicit integrator's stability bound."""


class ConvergenceError(RuntimeError):
    """Cutoff doubling did not meet the requested tolerance."""

    def __init__(self, message: str, gaps: list[tuple[int, float]]):
        super().__init__(message)
        self.gaps = gaps


@dataclass(frozen=True)
class GalerkinBasis:
    """Real orthonormal Fourier modes with ``|k|_inf <= kappa``.

    Ordering: the constant mode, then wavevectors of the half space (first
    nonzero component positive) sorted by ``(|k|^2, k)``, each contributing
    a cosine then a sine.
    """

    grid: TorusGrid
    kappa: int
    wavevectors: np.ndarray = field(init=False, repr=False)
    kinds: np.ndarray = field(init=False, repr=False)
    eigenvalues: np.ndarray = field(init=False, repr=False)
    modes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("cutoff must be nonnegative")
        if self.kappa >= self.grid.n // 2:
            raise ValueError(
                f"cutoff {self.kappa} needs N > {2 * self.kappa}, grid has N = {self.grid.n}"
            )
        dim = self.grid.dim
        rng = range(-self.kappa, self.kappa + 1)
        half = []
        for k in np.ndindex(*(len(rng),) * dim):
            vec = tuple(int(c) - self.kappa for c in k)
            nz = [c for c in vec if c != 0]
            if nz and nz[0] > 0:
                half.append(vec)
        half.sort(key=lambda v: (sum(c * c for c in v), v))
        vecs = [(0,) * dim]
        kinds = [0]
        for v in half:
            vecs += [v, v]
            kinds += [1, 2]
        vecs = np.array(vecs, dtype=int).reshape(-1, dim)
        kinds = np.array(kinds)
        vol = self.grid.volume
        mesh = [np.ravel(np.broadcast_to(c, self.grid.shape)) for c in self.grid.mesh()]
        phase = vecs @ np.stack(mesh)
        modes = np.where(
            kinds[:, None] == 0,
            1.0 / np.sqrt(vol),
            np.where(kinds[:, None] == 1, np.cos(phase), np.sin(phase)) * np.sqrt(2.0 / vol),
        )
        for name, val in (
            ("wavevectors", vecs),
            ("kinds", kinds),
            ("eigenvalues", np.sum(vecs**2, axis=1).astype(float)),
            ("modes", modes),
        ):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def size(self) -> int:
        return self.modes.shape[0]

    def mode_gradients(self) -> np.ndarray:
        """``[d, i, :]`` holds ``d w_i / d x_d`` on the flattened grid."""
        vol = self.grid.volume
        mesh = [np.ravel(np.broadcast_to(c, self.grid.shape)) for c in self.grid.mesh()]
        phase = self.wavevectors @ np.stack(mesh)
        amp = np.sqrt(2.0 / vol)
        # d cos = -k sin, d sin = k cos
        dshape = np.where(
            self.kinds[:, None] == 1,
            -np.sin(phase),
            np.where(self.kinds[:, None] == 2, np.cos(phase), 0.0),
        ) * amp
        return np.stack([self.wavevectors[:, d][:, None] * dshape for d in range(self.grid.dim)])

    def gram(self) -> np.ndarray:
        return self.modes @ self.modes.T * self.grid.cell_volume

    def project(self, f: GridField | np.ndarray) -> np.ndarray:
        vals = f.values if isinstance(f, GridField) else np.asarray(f)
        flat = vals.reshape(vals.shape[: vals.ndim - self.grid.dim] + (-1,))
        return flat @ self.modes.T * self.grid.cell_volume

    def reconstruct(self, eta: np.ndarray) -> np.ndarray:
        eta = np.asarray(eta)
        return (eta @ self.modes).reshape(eta.shape[:-1] + self.grid.shape)

    def index_of(self, k, kind: str = "cos") -> int:
        k = tuple(int(c) for c in k)
        code = {"const": 0, "cos": 1, "sin": 2}[kind]
        for i, (vec, kd) in enumerate(zip(self.wavevectors, self.kinds)):
            if tuple(vec) == k and kd == code:
                return i
        raise KeyError(f"mode {k} ({kind}) not in basis")


@dataclass(frozen=True)
class LinearCoefficients:
    """Coefficient fields ``(a, alpha, beta, gamma, f)`` on a common space-time grid."""

    a: SpaceTimeField
    alpha: SpaceTimeField
    beta: SpaceTimeField
    gamma: SpaceTimeField
    f: SpaceTimeField
    L: float | None = None

    def __post_init__(self):
        ref = self.alpha
        for name in ("a", "beta", "gamma", "f"):
            other = getattr(self, name)
            if other.grid != ref.grid or not np.array_equal(other.times, ref.times):
                raise ValueError(f"coefficient {name} is not on the alpha grid")
        lo, hi = float(ref.values.min()), float(ref.values.max())
        if lo <= 0:
            raise ValueError("alpha must be positive")
        L = self.L if self.L is not None else max(hi, 1.0 / lo, 1.0)
        if not (1.0 / L - 1e-14 <= lo and hi <= L + 1e-14):
            raise ValueError(f"alpha range [{lo}, {hi}] violates 1/L <= alpha <= L with L = {L}")
        object.__setattr__(self, "L", float(L))

    @property
    def grid(self) -> TorusGrid:
        return self.alpha.grid

    @property
    def times(self) -> np.ndarray:
        return self.alpha.times

    @classmethod
    def from_functions(cls, grid: TorusGrid, times, a=0.0, alpha=1.0, beta=0.0, gamma=0.0, f=0.0, L=None):
        """Build from callables ``fn(*mesh, t)`` or constants."""

        def make(spec):
            if callable(spec):
                return SpaceTimeField.from_function(grid, times, spec)
            return SpaceTimeField(grid, times, np.full((len(times), *grid.shape), float(spec)))

        return cls(make(a), make(alpha), make(beta), make(gamma), make(f), L)

    def apply_operator(self, u: SpaceTimeField, u_t: SpaceTimeField | None = None,
                       u_tt: SpaceTimeField | None = None) -> SpaceTimeField:
        """``u_tt + a u_t - (alpha Lap u + <grad beta, grad u> + gamma u)`` node by node."""
        u_t = u_t if u_t is not None else time_derivative(u, 1)
        u_tt = u_tt if u_tt is not None else time_derivative(u, 2)
        out = np.empty_like(u.values)
        for i, (ui, bi) in enumerate(zip(u, self.beta)):
            drift = sum(gb.values * gu.values for gb, gu in zip(gradient(bi), gradient(ui)))
            out[i] = (
                u_tt.values[i]
                + self.a.values[i] * u_t.values[i]
                - (self.alpha.values[i] * laplacian(ui).values + drift + self.gamma.values[i] * ui.values)
            )
        return u.with_values(out)


@dataclass
class GalerkinSystem:
    """Matrices of the projected ODE at every coefficient node."""

    basis: GalerkinBasis
    times: np.ndarray
    B: np.ndarray
    A: np.ndarray
    F: np.ndarray
    L: float

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12 * max(1.0, abs(times[-1])):
            raise ValueError(f"t = {t} outside coefficient range [{times[0]}, {times[-1]}]")
        j = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2))
        w = (t - times[j]) / (times[j + 1] - times[j])
        return (
            (1 - w) * self.B[j] + w * self.B[j + 1],
            (1 - w) * self.A[j] + w * self.A[j + 1],
            (1 - w) * self.F[j] + w * self.F[j + 1],
        )


def _assemble_node(basis: GalerkinBasis, grads_w, a, alpha, beta, gamma, f):
    W = basis.modes
    dv = basis.grid.cell_volume
    B = (W * a.ravel()) @ W.T * dv
    A = (W * alpha.ravel()) @ W.T * basis.eigenvalues[None, :]
    A -= (W * gamma.ravel()) @ W.T
    gb = gradient(GridField(basis.grid, beta))
    for d, g in enumerate(gb):
        A -= (W * g.values.ravel()) @ grads_w[d].T
    A *= dv
    F = W @ f.ravel() * dv
    return B, A, F


def assemble_system(coeffs: LinearCoefficients, basis: GalerkinBasis) -> GalerkinSystem:
    if basis.grid != coeffs.grid:
        raise ValueError("basis and coefficients live on different grids")
    grads_w = basis.mode_gradients()
    mats = [
        _assemble_node(
            basis, grads_w, coeffs.a.values[i], coeffs.alpha.values[i], coeffs.beta.values[i],
            coeffs.gamma.values[i], coeffs.f.values[i],
        )
        for i in range(coeffs.times.size)
    ]
    B, A, F = (np.stack(x) for x in zip(*mats))
    return GalerkinSystem(basis, coeffs.times.copy(), B, A, F, coeffs.L)


def build_ode_rhs(coeffs: LinearCoefficients, basis: GalerkinBasis, t: float):
    """``(B(t), A(t), F(t))`` with coefficients linearly interpolated in t."""
    if basis.grid != coeffs.grid:
        raise ValueError("basis and coefficients live on different grids")
    vals = [
        np.asarray(fld.interpolate(t))
        for fld in (coeffs.a, coeffs.alpha, coeffs.beta, coeffs.gamma, coeffs.f)
    ]
    return _assemble_node(basis, basis.mode_gradients(), *vals)


@dataclass(frozen=True)
class GalerkinState:
    eta: np.ndarray
    eta_prime: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if np.shape(self.eta) != np.shape(self.eta_prime):
            raise ValueError("eta and eta' must have the same length")


@dataclass(frozen=True)
class Projection:
    state: GalerkinState
    phi_tail: float
    psi_tail: float


def project_initial_data(phi: GridField, psi: GridField, basis: GalerkinBasis) -> Projection:
    """Initial coefficients and the L2 norms of what the basis cannot represent."""
    if phi.grid != basis.grid or psi.grid != basis.grid:
        raise ValueError("initial data and basis live on different grids")
    eta, eta_p = basis.project(phi), basis.project(psi)
    dv = basis.grid.cell_volume

    def tail(f, c):
        r = f.values - basis.reconstruct(c)
        return float(np.sqrt(np.sum(r * r) * dv))

    return Projection(GalerkinState(eta, eta_p, 0.0), tail(phi, eta), tail(psi, eta_p))


def stability_bound(L: float, kappa: int) -> float:
    return STABILITY_CONSTANT / (math.sqrt(L) * max(kappa, 1))


@dataclass
class Trajectory:
    times: np.ndarray
    eta: np.ndarray
    eta_prime: np.ndarray
    dt: float


def integrate(system: GalerkinSystem, state0: GalerkinState, T: float, dt: float,
              save_every: int = 1) -> Trajectory:
    """Classical RK4 on ``(eta, eta')`` from ``state0.t`` to ``T``.

    The step is shortened so an integer number of steps lands on ``T``.
    """
    bound = stability_bound(system.L, system.basis.kappa)
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt = {dt:g} exceeds the stability bound {bound:g}")
    span = T - state0.t
    if span <= 0:
        raise ValueError("final time must exceed the initial time")
    steps = max(1, math.ceil(span / dt - 1e-9))
    h = span / steps
    M = system.basis.size

    def rhs(t, y):
        Bm, Am, Fv = system.at(t)
        q, p = y[:M], y[M:]
        return np.concatenate([p, Fv - Bm @ p - Am @ q])

    y = np.concatenate([state0.eta, state0.eta_prime]).astype(float)
    t = state0.t
    out_t, out_y = [t], [y.copy()]
    for n in range(1, steps + 1):
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = state0.t + n * h
        if not np.all(np.isfinite(y)):
            raise StabilityError(f"integration blew up at t = {t:g}")
        if n % save_every == 0 or n == steps:
            out_t.append(t)
            out_y.append(y.copy())
    Y = np.array(out_y)
    return Trajectory(np.array(out_t), Y[:, :M], Y[:, M:], h)


@dataclass
class LinearSolution:
    u: SpaceTimeField
    u_t: SpaceTimeField
    basis: GalerkinBasis
    dt: float
    gaps: list[tuple[int, float]] = field(default_factory=list)
    eta: np.ndarray | None = None
    eta_prime: np.ndarray | None = None
    projection: Projection | None = None
    diagnostics: dict = field(default_factory=dict)


def _aligned_step(out_times: np.ndarray, dt: float) -> tuple[float, int]:
    spacing = float(out_times[1] - out_times[0])
    stride = max(1, math.ceil(spacing / dt - 1e-9))
    return spacing / stride, stride


def solve_galerkin(coeffs: LinearCoefficients, phi: GridField, psi: GridField, kappa: int,
                   T: float | None = None, dt: float | None = None,
                   out_times: np.ndarray | None = None,
                   system: GalerkinSystem | None = None) -> LinearSolution:
    """One Galerkin solve at a fixed cutoff.

    The solution is reported at ``out_times`` (default: the coefficient
    nodes up to ``T``), which must be uniform; the RK4 step divides their
    spacing.
    """
    basis = system.basis if system is not None else GalerkinBasis(coeffs.grid, kappa)
    if system is None:
        system = assemble_system(coeffs, basis)
    T = float(coeffs.times[-1]) if T is None else float(T)
    if out_times is None:
        out_times = coeffs.times[coeffs.times <= T + 1e-12]
    out_times = np.asarray(out_times, dtype=float)
    if abs(out_times[0] - coeffs.times[0]) > 1e-12:
        raise ValueError("output must start at the initial time")
    bound = stability_bound(coeffs.L, basis.kappa)
    dt_req = bound if dt is None else dt
    h, stride = _aligned_step(out_times, dt_req)
    proj = project_initial_data(phi, psi, basis)
    traj = integrate(system, proj.state, float(out_times[-1]), h, save_every=stride)
    if traj.times.size != out_times.size:
        raise ValueError("output times must be uniform")
    u = SpaceTimeField(coeffs.grid, out_times, basis.reconstruct(traj.eta))
    u_t = SpaceTimeField(coeffs.grid, out_times, basis.reconstruct(traj.eta_prime))
    return LinearSolution(u, u_t, basis, traj.dt, eta=traj.eta, eta_prime=traj.eta_prime,
                          projection=proj)


def c0_h1_gap(u1: SpaceTimeField, u2: SpaceTimeField) -> float:
    diff = u1.values - u2.values
    return max(sobolev_norm(GridField(u1.grid, d), 1) for d in diff)


def solve_linear(coeffs: LinearCoefficients, phi: GridField, psi: GridField, T: float | None = None,
                 tol: float = 1e-6, kappa0: int = 4, dt: float | None = None,
                 max_doublings: int = 6, out_times: np.ndarray | None = None) -> LinearSolution:
    """Solve at cutoffs ``kappa0, 2 kappa0, ...`` until successive solutions
    differ by less than ``tol`` in ``C0([0, T], H1)``.

    Cutoffs that the grid cannot resolve end the search with an error, as
    does exceeding ``2**max_doublings * kappa0``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    gaps: list[tuple[int, float]] = []
    nyq = coeffs.grid.n // 2 - 1
    kappa = min(kappa0, nyq)
    prev = solve_galerkin(coeffs, phi, psi, kappa, T, dt, out_times)
    for _ in range(max_doublings):
        nxt_k = min(2 * kappa, nyq)
        if nxt_k == kappa:
            break
        cur = solve_galerkin(coeffs, phi, psi, nxt_k, T, dt, out_times)
        gap = c0_h1_gap(prev.u, cur.u)
        gaps.append((nxt_k, gap))
        kappa, prev = nxt_k, cur
        if gap < tol:
            prev.gaps = gaps
            return prev
    raise ConvergenceError(
        f"cutoff doubling stopped at kappa = {kappa} without reaching tol = {tol:g}", gaps
    )


def _spacetime_sq(u: SpaceTimeField, s: int) -> np.ndarray:
    return np.array([sobolev_norm(f, s) ** 2 for f in u])


def apriori_report(sol: LinearSolution, phi: GridField, psi: GridField, f: SpaceTimeField,
                   order: int = 2) -> tuple[float, float]:
    """Measured left side and data bracket of the a priori estimate.

    ``order == 2``: ``sum_i ||u||^2_{W^{i,inf}(I, H^{2-i})}`` against
    ``||phi||^2_{H^2} + ||psi||^2_{H^1} + ||f(0)||^2_{L^2} + int ||f_t||^2``.
    Higher orders use ``sup_t sum_i ||d_t^i u||^2_{H^{N-i}}`` against
    ``||phi||^2_{H^N} + ||psi||^2_{H^{N-1}} + ||f(0)||^2_{H^{N-2}}
    + int sum_{i=1}^{N-1} ||d_t^i f||^2_{H^{N-1-i}}``.
    Time derivatives of order two and up are differences of ``u_t``.
    """
    if order < 2:
        raise ValueError("order must be at least 2")
    derivs = [sol.u, sol.u_t]
    for _ in range(2, order + 1):
        derivs.append(time_derivative(derivs[-1], 1))
    if order == 2:
        # ||u||_{W^{i,inf}(I,H^s)} takes the largest sup-norm over d_t^j u, j <= i
        lhs = sum(
            max(float(_spacetime_sq(derivs[j], 2 - i).max()) for j in range(i + 1))
            for i in range(3)
        )
    else:
        per = [_spacetime_sq(derivs[i], order - i) for i in range(order + 1)]
        lhs = float(np.max(np.sum(per, axis=0)))
    times = f.times
    f_derivs = [f]
    for _ in range(1, max(order - 1, 1) + 1):
        f_derivs.append(time_derivative(f_derivs[-1], 1))
    integrand = np.zeros(times.size)
    for i in range(1, order):
        integrand += _spacetime_sq(f_derivs[i], order - 1 - i)
    mask = times <= sol.u.times[-1] + 1e-12
    integral = float(np.trapezoid(integrand[mask], times[mask])) if mask.sum() > 1 else 0.0
    rhs = (
        sobolev_norm(phi, order) ** 2
        + sobolev_norm(psi, order - 1) ** 2
        + sobolev_norm(f.at(0), order - 2) ** 2
        + integral
    )
    return float(lhs), float(rhs)
