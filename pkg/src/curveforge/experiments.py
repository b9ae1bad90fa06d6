"""End-to-end experiments behind the acceptance suite and ``curveforge reproduce``.

Every ``criterion_*`` function runs one experiment and returns a
:class:`Verdict`.  Convergent nonlinear runs are appended to an
:class:`Archive`, which criterion 8 later replays through the Gronwall
check.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.signal import resample

from . import curvature as cv
from .energy import gronwall_check
from .galerkin import LinearCoefficients, solve_galerkin
from .norms import composition_ratio, interpolation_ratio, product_ratio, sobolev_norm
from .picard import (
    NonlinearSolution,
    PicardConfig,
    picard_solve,
    prescribed_curvature,
    rhs_F,
    small_data_solve,
    uniqueness_probe,
)
from .torus import (
    GridField,
    SpaceTimeField,
    TorusGrid,
    forward_transform,
    inverse_transform,
    laplacian,
    random_band_limited,
    spatial_map,
)

S, C = np.sin, np.cos


@dataclass
class Verdict:
    criterion: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0
    budget: float | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        budget = f" / {self.budget:g}s" if self.budget else ""
        return f"criterion {self.criterion} [{status}] {self.title} ({self.seconds:.1f}s{budget})"


@dataclass
class Archive:
    """Convergent runs collected across experiments."""

    runs: list[tuple[str, NonlinearSolution]] = field(default_factory=list)

    def add(self, label: str, sol: NonlinearSolution) -> None:
        if sol.report.converged:
            self.runs.append((label, sol))


def _timed(criterion: int, title: str, budget: float):
    def wrap(fn):
        def run(*args, **kwargs) -> Verdict:
            start = time.perf_counter()
            passed, details = fn(*args, **kwargs)
            return Verdict(criterion, title, bool(passed), details, time.perf_counter() - start, budget)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


# --- curvature cases ---------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureCase:
    """A deformation on a product grid; axes ``u`` ignores get 4 points."""

    name: str
    m: int
    n: int
    fn: Callable[..., np.ndarray]
    varying_x: tuple[bool, ...]
    varying_y: tuple[bool, ...]

    def spec(self, N: int) -> cv.ProductManifoldSpec:
        xp = tuple(N if v else 4 for v in self.varying_x)
        if self.n == 1:
            yp = (N + 1,)
        else:
            yp = tuple(N if v else 4 for v in self.varying_y)
        return cv.ProductManifoldSpec(self.m, self.n, xp, yp, T=1.0)


CURVATURE_CASES = {
    "flat-zero": CurvatureCase("flat-zero", 1, 1, lambda x, t: 0.0 * x * t, (True,), (True,)),
    "sine-m1": CurvatureCase("sine-m1", 1, 1, lambda x, t: 0.3 * S(x) * C(t), (True,), (True,)),
    "sine-m2": CurvatureCase(
        "sine-m2", 2, 1, lambda x1, x2, t: 0.3 * S(x1) * C(t) + 0.0 * x2, (True, False), (True,)
    ),
    "general-n": CurvatureCase(
        "general-n", 2, 2, lambda x1, x2, y1, y2: 0.3 * S(x1) * C(y1) + 0.0 * (x2 + y2),
        (True, False), (True, False),
    ),
}


def _ratios(errors):
    out = []
    for a, b in zip(errors[:-1], errors[1:]):
        if a < 1e-12 and b < 1e-12:
            out.append(None)  # both at rounding level
        else:
            out.append(a / b if b > 0 else float("inf"))
    return out


def curvature_study(case: CurvatureCase, resolutions=(32, 64, 128)) -> dict:
    """Scalar curvature (FD vs formula) and Christoffel families per resolution."""
    rows = []
    for N in resolutions:
        spec = case.spec(N)
        u = spec.sample(case.fn)
        K = cv.assemble_deformed_metric(spec, u)
        interior = spec.interior()
        gamma = cv.christoffel_fd(K)
        fam_fd = cv.families_from_tensor(spec, gamma, K.K)
        fam_cf = cv.christoffel_closed_form(spec, u)
        fam_err = {k: float(np.abs(fam_fd[k][interior] - fam_cf[k][interior]).max()) for k in fam_cf}
        del gamma, fam_fd
        R_fd = cv.scalar_curvature_fd(K)
        R_cf = cv.scalar_curvature_formula(spec, u)
        rows.append({
            "N": N,
            "scalar": float(np.abs(R_fd - R_cf)[interior].max()),
            "families": fam_err,
            "traces": cv.trace_identities(spec, fam_cf),
        })
    return {"case": case.name, "rows": rows}


def curvature_table(study: dict) -> list[tuple[int, str, float, float | None]]:
    """``(N, identity, max error, halving ratio)`` rows for CSV output."""
    rows = study["rows"]
    names = ["scalar"] + sorted(rows[0]["families"])
    out = []
    for name in names:
        errs = [r["scalar"] if name == "scalar" else r["families"][name] for r in rows]
        ratios = [None] + _ratios(errs)
        label = "scalar_curvature" if name == "scalar" else f"christoffel_{name}"
        out.extend((r["N"], label, e, q) for r, e, q in zip(rows, errs, ratios))
    return out


def _ratio_ok(ratios, lo=3.0) -> bool:
    return all(q is None or q >= lo for q in ratios)


@_timed(1, "curvature formula vs finite-difference oracle", 60.0)
def criterion_1(resolutions=(32, 64, 128), gap_tol: float = 1e-3):
    details, ok = {}, True
    for key in ("sine-m1", "sine-m2", "general-n"):
        case = CURVATURE_CASES[key]
        rows = []
        for N in resolutions:
            spec = case.spec(N)
            u = spec.sample(case.fn)
            K = cv.assemble_deformed_metric(spec, u)
            err = np.abs(cv.scalar_curvature_fd(K) - cv.scalar_curvature_formula(spec, u))
            rows.append(float(err[spec.interior()].max()))
            del K, err
        ratios = _ratios(rows)
        case_ok = _ratio_ok(ratios) and rows[-1] <= gap_tol
        details[f"{case.m},{case.n}"] = {"errors": rows, "ratios": ratios, "pass": case_ok}
        ok &= case_ok
    return ok, details


@_timed(2, "Christoffel closed forms and trace identities", 10.0)
def criterion_2(resolutions=(32, 64, 128)):
    details, ok = {}, True
    for key in ("sine-m1", "sine-m2"):
        study = curvature_study(CURVATURE_CASES[key], resolutions)
        fams = sorted(study["rows"][0]["families"])
        per = {}
        for name in fams:
            errs = [r["families"][name] for r in study["rows"]]
            ratios = _ratios(errs)
            per[name] = {"errors": errs, "ratios": ratios}
            ok &= _ratio_ok(ratios)
        traces = max(max(r["traces"]) for r in study["rows"])
        ok &= traces <= 1e-10
        details[key] = {"families": per, "trace_max": traces}
    return ok, details


# --- linear solver --------------------------------------------------------------------


def manufactured_linear(grid: TorusGrid, times: np.ndarray) -> tuple[LinearCoefficients, Callable]:
    """Coefficients for ``u* = cos(t) sin(x)`` with variable ``a, alpha, beta`` and ``gamma = 0.1``."""

    def f(x, t):
        u, ut, utt = C(t) * S(x), -S(t) * S(x), -C(t) * S(x)
        alpha, a, beta_x, gamma = 1 + 0.2 * S(x), 0.1 * C(x), 0.05 * C(x), 0.1
        return utt + a * ut - (alpha * (-u) + beta_x * C(t) * C(x) + gamma * u)

    coeffs = LinearCoefficients.from_functions(
        grid, times,
        a=lambda x, t: 0.1 * C(x) + 0 * t,
        alpha=lambda x, t: 1 + 0.2 * S(x) + 0 * t,
        beta=lambda x, t: 0.05 * S(x) + 0 * t,
        gamma=0.1,
        f=f,
    )
    return coeffs, lambda x, t: C(t) * S(x)


@_timed(3, "linear Galerkin manufactured solution", 30.0)
def criterion_3(kappa: int = 8, dt: float = 1e-3, N: int = 64):
    grid = TorusGrid(1, N)
    times = np.linspace(0.0, 1.0, int(round(1 / dt)) + 1)
    coeffs, exact = manufactured_linear(grid, times)
    phi = GridField.from_function(grid, S)
    psi = GridField.constant(grid, 0.0)
    sol = solve_galerkin(coeffs, phi, psi, kappa, dt=dt)
    ref = SpaceTimeField.from_function(grid, sol.u.times, exact)
    err = float(np.abs(sol.u.values - ref.values).max())
    return err <= 5e-5, {"kappa": kappa, "dt": sol.dt, "c0_error": err}


# --- nonlinear problems -----------------------------------------------------------------


def manufactured_nonlinear(N: int = 64, T: float = 0.5, nodes: int = 2001):
    """``u* = 0.2 sin(x) sin(t)``: curvature, data and the exact field."""
    grid = TorusGrid(1, N)
    times = np.linspace(0.0, T, nodes)
    exact = lambda x, t: 0.2 * S(x) * S(t)  # noqa: E731
    u = SpaceTimeField.from_function(grid, times, exact)
    u_t = SpaceTimeField.from_function(grid, times, lambda x, t: 0.2 * S(x) * C(t))
    R = prescribed_curvature(u, 1, u_t=u_t, u_tt=u.with_values(-u.values))
    phi = GridField.constant(grid, 0.0)
    psi = GridField.from_function(grid, lambda x: 0.2 * S(x))
    return R, phi, psi, exact


MANUFACTURED_CFG = PicardConfig(t0=0.5, kappa=16, dt=1e-3)
SMALL_DATA_CFG = PicardConfig(kappa=8, dt=2e-3)


def small_data_curvature(amplitude: float = 1e-3):
    return lambda x, t: amplitude * S(x) * S(t)


@_timed(4, "nonlinear manufactured recovery", 120.0)
def criterion_4(archive: Archive | None = None):
    R, phi, psi, exact = manufactured_nonlinear()
    sol = picard_solve(R, phi, psi, MANUFACTURED_CFG)
    if archive is not None:
        archive.add("manufactured", sol)
    ref = SpaceTimeField.from_function(phi.grid, sol.u.times, exact)
    err = float(np.abs(sol.u.values - ref.values).max())
    ratios = sol.report.ratios
    r2 = sol.report.geometric_fit_r2()
    ok = (
        sol.report.converged and abs(sol.t0 - 0.5) < 1e-12 and err <= 1e-4
        and all(q < 1 for q in ratios) and r2 is not None and r2 > 0.95
    )
    return ok, {"t0": sol.t0, "c0_error": err, "ratios": ratios, "r2": r2, "d": sol.report.d}


def residual_floor(R, grid: TorusGrid, T: float, cfg: PicardConfig) -> float:
    """Residual of the refined run (doubled cutoff, halved step)."""
    fine = replace(cfg, kappa=min(2 * (cfg.kappa or grid.n // 4), grid.n // 2 - 1),
                   dt=(cfg.dt or 1e-3) / 2)
    return small_data_solve(R, grid, T, fine).max_residual


@_timed(5, "small-data regime on the full interval", 120.0)
def criterion_5(archive: Archive | None = None, N: int = 32, T: float = 1.0):
    grid = TorusGrid(1, N)
    R = small_data_curvature(1e-3)
    sol = small_data_solve(R, grid, T, SMALL_DATA_CFG)
    if archive is not None:
        archive.add("small-data", sol)
    floor = residual_floor(R, grid, T, SMALL_DATA_CFG)
    bound = sol.D / (2 * np.sqrt(2))
    root_max = float(sol.energy.sqrt_Es.max())
    ok = (
        sol.report.converged and abs(sol.t0 - T) < 1e-12
        and sol.max_residual <= 10 * floor and root_max <= bound and sol.sup_norm() <= sol.D
    )
    return ok, {
        "max_residual": sol.max_residual, "floor": floor, "sqrt_Es_max": root_max,
        "energy_bound": bound, "sup_norm": sol.sup_norm(), "D": sol.D, "iterations": len(sol.report.d),
    }


def ode_reference(m: int, R: Callable[[float], float], u0: float, v0: float, times: np.ndarray):
    """High-accuracy solution of ``2m e^{2mu} u'' + m(3m+1) e^{2mu} u'^2 = -R(t)``."""

    def rhs(t, y):
        u, v = y
        return [v, -(R(t) * np.exp(-2 * m * u) + m * (3 * m + 1) * v * v) / (2 * m)]

    sol = solve_ivp(rhs, (times[0], times[-1]), [u0, v0], t_eval=times, method="DOP853",
                    rtol=1e-12, atol=1e-14)
    return sol.y[0]


@_timed(6, "ODE reduction for spatially constant curvature", 30.0)
def criterion_6(archive: Archive | None = None, u0: float = 0.1, v0: float = 0.05, T: float = 1.0):
    grid = TorusGrid(1, 16)
    sol = picard_solve(lambda x, t: 0.1 * C(t) + 0 * x, GridField.constant(grid, u0),
                       GridField.constant(grid, v0), PicardConfig(t0=T, kappa=4, dt=1e-3))
    if archive is not None:
        archive.add("ode-reduction", sol)
    ref = ode_reference(1, lambda t: 0.1 * np.cos(t), u0, v0, sol.u.times)
    err = float(np.abs(sol.u.values - ref[:, None]).max())
    return err <= 1e-5, {"t0": sol.t0, "max_error": err}


@_timed(7, "uniqueness probe", 300.0)
def criterion_7(archive: Archive | None = None):
    details, ok = {}, True
    R, phi, psi, _ = manufactured_nonlinear()
    def keep(prefix):
        return (lambda label, sol: archive.add(f"{prefix}-{label}", sol)) if archive is not None else None

    probes = {
        "manufactured": uniqueness_probe(R, phi, psi, MANUFACTURED_CFG, on_solution=keep("probe-manufactured")),
    }
    zero = GridField.constant(TorusGrid(1, 32), 0.0)
    small_cfg = replace(SMALL_DATA_CFG, t0=1.0, adaptive=False)
    probes["small-data"] = uniqueness_probe(
        small_data_curvature(1e-3), zero, zero, small_cfg, on_solution=keep("probe-small-data")
    )
    for name, rep in probes.items():
        within = all(g <= 1e-4 for lev in rep.levels for g in lev.values())
        good = rep.converged and within and rep.shrinking()
        details[name] = {"levels": rep.levels, "shrinking": rep.shrinking(), "pass": good}
        ok &= good
    return ok, details


def random_smooth_spacetime(grid: TorusGrid, times: np.ndarray, rng: np.random.Generator, amp=0.3):
    """``a(x) cos(t) + b(x) sin(2t)`` with random band-limited ``a, b``, plus exact t-derivatives."""
    a = random_band_limited(grid, 4, rng, decay=1.0, amplitude=amp).values
    b = random_band_limited(grid, 4, rng, decay=1.0, amplitude=amp / 2).values
    tt = times.reshape((-1,) + (1,) * grid.dim)
    u = a * C(tt) + b * S(2 * tt)
    u_t = -a * S(tt) + 2 * b * C(2 * tt)
    u_tt = -a * C(tt) - 4 * b * S(2 * tt)
    mk = lambda v: SpaceTimeField(grid, times, v)  # noqa: E731
    return mk(u), mk(u_t), mk(u_tt)


def consistency_defect(m: int, u, u_t, u_tt, R) -> float:
    """Max of ``|m u_tt - e^{-2(m+1)u} Lap u - F(u,u) + e^{-2mu}/2 (R(u) - R~)|``."""
    lap = spatial_map(u, laplacian).values
    F = rhs_F(u, u, R, m, u_t=u_t, v_t=u_t).values
    res = prescribed_curvature(u, m, u_t=u_t, u_tt=u_tt).values - R.values
    lhs = m * u_tt.values - np.exp(-2 * (m + 1) * u.values) * lap - F
    return float(np.abs(lhs + 0.5 * np.exp(-2 * m * u.values) * res).max())


@_timed(8, "Gronwall check on the run archive and algebraic consistency", 10.0)
def criterion_8(archive: Archive | None = None, samples: int = 20, seed: int = 8):
    rng = np.random.default_rng(seed)
    defects = []
    for i in range(samples):
        m = 1 + i % 2
        grid = TorusGrid(m, 16)
        times = np.linspace(0.0, 1.0, 11)
        u, u_t, u_tt = random_smooth_spacetime(grid, times, rng)
        R = SpaceTimeField(grid, times, random_band_limited(grid, 3, rng).values[None].repeat(11, 0))
        defects.append(consistency_defect(m, u, u_t, u_tt, R))
    runs = {}
    for label, sol in (archive.runs if archive else []):
        res = gronwall_check(sol.energy)
        runs[label] = {"rate": res.rate, "passed": res.passed, "margin": res.margin}
    ok = max(defects) <= 1e-9 and all(r["passed"] for r in runs.values())
    if archive is not None and not runs:
        ok = False
    return ok, {"max_defect": max(defects), "runs": runs}


# --- norm layer ------------------------------------------------------------------------------


def _upsample(f: GridField, factor: int = 2) -> GridField:
    vals = f.values
    fine = TorusGrid(f.grid.dim, f.grid.n * factor)
    for ax in range(f.grid.dim):
        vals = resample(vals, fine.n, axis=ax)
    return GridField(fine, vals)


def ratio_sweep(kind: str, count: int, N: int, rng: np.random.Generator, dim: int = 1) -> tuple[float, float]:
    """Max bounded-inequality ratio over ``count`` random fields at ``N`` and ``2N``.

    The same trigonometric polynomials are evaluated on both grids.
    """
    grid = TorusGrid(dim, N)
    coarse, fine = [], []
    for _ in range(count):
        f = random_band_limited(grid, N // 4, rng, decay=rng.uniform(0.0, 3.0),
                                amplitude=rng.uniform(0.1, 2.0))
        F = _upsample(f)
        if kind == "interpolation":
            coarse.append(interpolation_ratio(f, 1, 2, 0.6))
            fine.append(interpolation_ratio(F, 1, 2, 0.6))
        elif kind == "product":
            g = random_band_limited(grid, N // 4, rng, decay=1.0, amplitude=rng.uniform(0.1, 2.0))
            coarse.append(product_ratio(f, g, 2))
            fine.append(product_ratio(F, _upsample(g), 2))
        elif kind == "composition":
            coarse.append(composition_ratio(f, 2))
            fine.append(composition_ratio(F, 2))
        else:
            raise ValueError(kind)
    return max(coarse), max(fine)


@_timed(9, "norm layer: Parseval, round trip, bounded-ratio sweeps", 30.0)
def criterion_9(count: int = 200, N: int = 32, seed: int = 9):
    rng = np.random.default_rng(seed)
    parseval, roundtrip = 0.0, 0.0
    for dim in (1, 2):
        grid = TorusGrid(dim, N)
        for _ in range(20):
            f = random_band_limited(grid, N // 2 - 1, rng)
            F = forward_transform(f)
            l2 = sobolev_norm(f, 0) ** 2
            parseval = max(parseval, abs(l2 - F.weighted_norm_sq()) / l2)
            back = inverse_transform(F).values
            roundtrip = max(roundtrip, float(np.abs(back - f.values).max() / np.abs(f.values).max()))
    sweeps = {}
    ok = parseval <= 1e-10 and roundtrip <= 1e-12
    for kind in ("interpolation", "product", "composition"):
        lo, hi = ratio_sweep(kind, count, N, rng)
        growth = hi / lo
        sweeps[kind] = {"max_ratio_N": lo, "max_ratio_2N": hi, "growth": growth}
        ok &= bool(np.isfinite(lo) and np.isfinite(hi) and growth < 2.0)
    return ok, {"parseval_rel": parseval, "roundtrip_rel": roundtrip, "sweeps": sweeps}


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9,
}

PRESETS = {
    "sec3-derivation": (1, 2),
    "thm11-local": (4, 6),
    "thm12-smalldata": (5,),
    "prop63-uniqueness": (7,),
}


def run_criteria(numbers, archive: Archive | None = None) -> list[Verdict]:
    archive = archive if archive is not None else Archive()
    out = []
    for k in numbers:
        fn = CRITERIA[k]
        if k in (4, 5, 6, 7, 8):
            out.append(fn(archive=archive))
        else:
            out.append(fn())
    return out
