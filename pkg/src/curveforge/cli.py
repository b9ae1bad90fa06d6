"""Command-line front end.

Subcommands::

    curveforge verify-curvature --preset sine-m1
    curveforge solve-linear --preset standing-wave
    curveforge solve --mode small-data --rtilde "1e-3*sin(x)*sin(t)" --m 1 --T 1
    curveforge energy-report --solution out/solution.bin
    curveforge reproduce sec3-derivation

Outputs go to ``--out``, else ``$CURVEFORGE_OUT``, else ``./curveforge_out``.
Exit status: 0 when the run's verdict passes, 1 on a computational failure
or a failed verdict, 2 on invalid configuration.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import curvature as cv
from .energy import doubling_time, energy_trace, gronwall_check
from .expressions import ExpressionError, compile_expression
from .experiments import CURVATURE_CASES, PRESETS, Archive, curvature_table, run_criteria
from .fieldio import read_field, write_field
from .galerkin import ConvergenceError, LinearCoefficients, StabilityError, apriori_report, solve_linear
from .picard import (
    PicardConfig,
    PicardDivergence,
    default_sobolev_index,
    picard_solve,
    small_data_solve,
)
from .torus import GridField, SpaceTimeField, TorusGrid, time_derivative

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, name: str, message: str):
        super().__init__(f"{name}: {message}")
        self.name = name


def _plain(obj):
    """JSON-ready copy with numpy scalars and arrays converted."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


@dataclass
class RunRecord:
    subcommand: str
    config: dict
    diagnostics: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(bool(v) for v in self.verdicts.values())

    def to_json(self, include_wall_time: bool = True) -> str:
        data = _plain(asdict(self))
        if not include_wall_time:
            data.pop("wall_time")
        return json.dumps(data, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls(**json.loads(text))

    def write(self, path: Path) -> None:
        path.write_text(self.to_json() + "\n")


# --- validation helpers -------------------------------------------------------------------


def _require(cond: bool, name: str, message: str) -> None:
    if not cond:
        raise ConfigError(name, message)


def _check_grid(m: int, N: int) -> TorusGrid:
    _require(m >= 1, "m", "must be a positive integer")
    _require(N >= 4 and N % 2 == 0, "N", "must be an even integer >= 4")
    return TorusGrid(m, N)


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("CURVEFORGE_OUT") or "curveforge_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _space_field(spec: str | None, grid: TorusGrid, name: str, default: float = 0.0) -> GridField:
    if spec is None:
        return GridField.constant(grid, default)
    if Path(spec).is_file():
        f = read_field(spec)
        _require(isinstance(f, GridField) and f.grid == grid, name, "field file does not match the grid")
        return f
    try:
        fn = compile_expression(spec, grid.dim, with_time=False)
    except ExpressionError as exc:
        raise ConfigError(name, str(exc)) from exc
    return GridField.from_function(grid, fn)


def _spacetime_input(spec, grid: TorusGrid, name: str):
    """Expression (callable of x and t) or a space-time field file."""
    if spec is None:
        return 0.0
    if Path(str(spec)).is_file():
        f = read_field(spec)
        _require(f.grid == grid, name, "field file does not match the grid")
        return f
    try:
        return compile_expression(str(spec), grid.dim, with_time=True)
    except ExpressionError as exc:
        raise ConfigError(name, str(exc)) from exc


# --- verify-curvature -------------------------------------------------------------------------


def cmd_verify_curvature(args) -> RunRecord:
    _require(args.preset in CURVATURE_CASES, "preset", f"unknown preset {args.preset!r}")
    res = sorted(args.resolutions)
    _require(len(res) >= 2 and all(r >= 8 and r % 2 == 0 for r in res), "resolutions",
             "need at least two even resolutions >= 8")
    case = CURVATURE_CASES[args.preset]
    config = {"preset": args.preset, "resolutions": res, "conformal": args.conformal}
    if args.conformal:
        table = _conformal_table(case, res, args.conformal)
    else:
        from .experiments import curvature_study

        table = curvature_table(curvature_study(case, res))
    out = _out_dir(args)
    with open(out / "verify_curvature.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "identity", "max_error", "halving_ratio"])
        for N, ident, err, ratio in table:
            w.writerow([N, ident, repr(err), "" if ratio is None else repr(ratio)])
    exact = all(err <= 1e-8 for _, _, err, _ in table)
    ratios_ok = all(r is None or r >= 3.0 for *_, r in table)
    return RunRecord("verify-curvature", config, {"rows": table}, {"pass": exact or ratios_ok})


def _conformal_table(case, resolutions, expr):
    _require(case.n == 1, "conformal", "curved bases are only supported with n = 1 presets")
    fn = compile_expression(expr, case.m, with_time=False)
    errs = []
    for N in resolutions:
        spec0 = case.spec(N)
        x = np.meshgrid(*spec0.coordinates()[: case.m], indexing="ij")
        phi = np.broadcast_to(fn(*x), spec0.x_points)
        spec = cv.ProductManifoldSpec(case.m, case.n, spec0.x_points, spec0.y_points, 1.0,
                                      g=cv.conformal_metric(phi, case.m))
        u = spec.sample(case.fn)
        K = cv.assemble_deformed_metric(spec, u)
        err = np.abs(cv.scalar_curvature_fd(K) - cv.scalar_curvature_formula(spec, u, base_conformal_factor=phi))
        errs.append(float(err[spec.interior()].max()))
    from .experiments import _ratios

    ratios = [None] + _ratios(errs)
    return [(N, "scalar_curvature_conformal", e, q) for N, e, q in zip(resolutions, errs, ratios)]


# --- solve-linear -------------------------------------------------------------------------------

STANDING_WAVE = {
    "m": 1, "N": 32, "T": 1.0, "dt": 1e-3, "kappa0": 2, "tol": 1e-8,
    "a": "0", "alpha": "1", "beta": "0", "gamma": "0", "f": "0",
    "phi": "sin(x)", "psi": "0", "exact": "cos(t)*sin(x)", "error_tol": 1e-6,
}


def cmd_solve_linear(args) -> RunRecord:
    if args.preset:
        _require(args.preset == "standing-wave", "preset", f"unknown preset {args.preset!r}")
        cfg = dict(STANDING_WAVE)
    else:
        _require(args.config is not None, "config", "give --config FILE or --preset")
        try:
            cfg = {**STANDING_WAVE, "exact": None, **json.loads(Path(args.config).read_text())}
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", str(exc)) from exc
    grid = _check_grid(int(cfg["m"]), int(cfg["N"]))
    T, dt = float(cfg["T"]), float(cfg["dt"])
    _require(T > 0, "T", "must be positive")
    _require(0 < dt <= T, "dt", "must lie in (0, T]")
    _require(float(cfg["tol"]) > 0, "tol", "must be positive")
    _require(int(cfg["kappa0"]) >= 1, "kappa0", "must be a positive integer")
    times = np.linspace(0.0, T, int(round(T / dt)) + 1)

    def coeff(name):
        spec = cfg[name]
        src = _spacetime_input(spec, grid, name)
        if isinstance(src, SpaceTimeField):
            return src.resample(times)
        return SpaceTimeField.from_function(grid, times, src)

    try:
        coeffs = LinearCoefficients(*(coeff(k) for k in ("a", "alpha", "beta", "gamma", "f")),
                                    L=cfg.get("L"))
    except ValueError as exc:
        raise ConfigError("alpha", str(exc)) from exc
    phi = _space_field(cfg["phi"], grid, "phi")
    psi = _space_field(cfg["psi"], grid, "psi")
    sol = solve_linear(coeffs, phi, psi, T, tol=float(cfg["tol"]), kappa0=int(cfg["kappa0"]), dt=dt)
    lhs, rhs = apriori_report(sol, phi, psi, coeffs.f)
    diag = {
        "kappa": sol.basis.kappa, "dt": sol.dt, "gaps": sol.gaps,
        "apriori": {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs > 0 else None},
        "projection_tail": {"phi": sol.projection.phi_tail, "psi": sol.projection.psi_tail},
    }
    verdicts = {"converged": True}
    if cfg.get("exact"):
        exact = SpaceTimeField.from_function(grid, sol.u.times, compile_expression(cfg["exact"], grid.dim))
        err = float(np.abs(sol.u.values - exact.values).max())
        diag["c0_error"] = err
        verdicts["error_within_tolerance"] = err <= float(cfg.get("error_tol", 1e-6))
    out = _out_dir(args)
    write_field(out / f"linear_solution.{args.format}", sol.u)
    return RunRecord("solve-linear", _plain(cfg), diag, verdicts)


# --- solve ----------------------------------------------------------------------------------------


def cmd_solve(args) -> RunRecord:
    grid = _check_grid(args.m, args.N)
    _require(args.T > 0, "T", "must be positive")
    _require(args.t0 is None or 0 < args.t0 <= args.T, "t0", "must lie in (0, T]")
    _require(args.tol > 0, "tol", "must be positive")
    _require(args.D is None or args.D > 0, "D", "must be positive")
    _require(args.dt > 0, "dt", "must be positive")
    _require(args.k >= 1, "k", "must be a positive integer")
    s = args.s if args.s is not None else default_sobolev_index(args.m, args.k)
    _require(s >= args.m // 2 + 2, "s", f"must be at least floor(m/2) + 2 = {args.m // 2 + 2}")
    _require(s + 1 <= args.N // 2, "s", f"s + 1 must not exceed N/2 = {args.N // 2}")
    kappa = args.cutoff if args.cutoff is not None else args.N // 4
    _require(1 <= kappa < args.N // 2, "cutoff", f"must lie in [1, {args.N // 2 - 1}]")
    R = _spacetime_input(args.rtilde, grid, "rtilde")
    cfg = PicardConfig(s=s, k=args.k, D=args.D, t0=args.t0 or args.T, max_iters=args.max_iters,
                       tol=args.tol, adaptive=args.adaptive, kappa=kappa, dt=args.dt)
    config = {k: getattr(args, k) for k in ("m", "N", "t0", "T", "s", "k", "D", "tol", "rtilde", "phi",
                                             "psi", "mode", "adaptive", "dt", "cutoff", "max_iters")}
    config["s"], config["cutoff"] = s, kappa
    if args.mode == "small-data":
        _require(args.phi is None and args.psi is None, "phi", "small-data mode uses zero initial data")
        run = lambda c: small_data_solve(R, grid, args.T, c, raise_on_failure=True)  # noqa: E731
    else:
        phi = _space_field(args.phi, grid, "phi")
        psi = _space_field(args.psi, grid, "psi")
        run = lambda c: picard_solve(R, phi, psi, c, raise_on_failure=True)  # noqa: E731
    out = _out_dir(args)
    try:
        sol = run(cfg)
    except PicardDivergence as exc:
        rec = RunRecord("solve", config, {"error": str(exc), "report": exc.report.as_dict()},
                        {"converged": False})
        return rec
    diag = {
        "report": sol.report.as_dict(),
        "t0": sol.t0, "D": sol.D, "E_s0": sol.E_s0,
        "max_residual": sol.max_residual,
        "sup_norm": sol.sup_norm(),
        "sqrt_energy_per_iteration": sol.report.sqrt_energy,
        "thresholds": {"k_local_min": 2, "k_small_data_exceeds": args.m / 2 + 3, "k": args.k},
    }
    verdicts = {"converged": sol.report.converged, "sup_norm_within_D": sol.sup_norm() <= sol.D}
    if args.floor:
        fine_cfg = PicardConfig(**{**asdict(sol.config), "kappa": min(2 * kappa, args.N // 2 - 1),
                                   "dt": args.dt / 2, "t0": sol.t0, "adaptive": False})
        try:
            fine = run(fine_cfg)
            diag["residual_floor"] = fine.max_residual
            verdicts["residual_within_10x_floor"] = sol.max_residual <= 10 * fine.max_residual
        except PicardDivergence as exc:
            diag["residual_floor"] = f"refined run failed: {exc}"
            verdicts["residual_within_10x_floor"] = False
    if args.mode == "small-data":
        root_max = float(sol.energy.sqrt_Es.max())
        diag["sqrt_Es_max"] = root_max
        verdicts["energy_below_D_over_2sqrt2"] = root_max <= sol.D / (2 * np.sqrt(2))
    write_field(out / f"solution.{args.format}", sol.u)
    write_field(out / f"residual.{args.format}", sol.residual)
    return RunRecord("solve", config, diag, verdicts)


# --- energy-report ----------------------------------------------------------------------------------


def cmd_energy_report(args) -> RunRecord:
    try:
        u = read_field(args.solution)
    except (OSError, ValueError) as exc:
        raise ConfigError("solution", str(exc)) from exc
    _require(isinstance(u, SpaceTimeField), "solution", "needs a space-time field")
    _require(u.n_nodes >= 3, "solution", "needs at least 3 time nodes")
    m = u.grid.dim
    s = args.s if args.s is not None else default_sobolev_index(m)
    _require(1 <= s <= u.grid.n // 2, "s", f"must lie in [1, {u.grid.n // 2}]")
    R = _spacetime_input(args.rtilde, u.grid, "rtilde") if args.rtilde else None
    R_field = None
    if R is not None:
        R_field = R.resample(u.times) if isinstance(R, SpaceTimeField) else SpaceTimeField.from_function(
            u.grid, u.times, R)
    trace = energy_trace(u, u, s, m, u_t=time_derivative(u, 1), R_tilde=R_field)
    header, table = trace.to_rows()
    out = _out_dir(args)
    np.savetxt(out / "energy_trace.csv", table, delimiter=",", header=",".join(header), comments="",
               fmt="%.17g")
    gr = gronwall_check(trace)
    diag = {"rate": gr.rate, "margin": gr.margin, "doubling_time": doubling_time(trace),
            "sqrt_Es_max": float(trace.sqrt_Es.max()), "s": s}
    rec = RunRecord("energy-report", {"solution": str(args.solution), "s": s, "rtilde": args.rtilde},
                    diag, {"gronwall": gr.passed})
    (out / "energy_verdict.json").write_text(rec.to_json() + "\n")
    return rec


# --- reproduce -------------------------------------------------------------------------------------


def cmd_reproduce(args) -> RunRecord:
    _require(args.preset in PRESETS, "preset", f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
    verdicts = run_criteria(PRESETS[args.preset], Archive())
    for v in verdicts:
        print(v.line())
    return RunRecord("reproduce", {"preset": args.preset},
                     {f"criterion_{v.criterion}": v.details for v in verdicts},
                     {f"criterion_{v.criterion}": v.passed for v in verdicts})


# --- parser ------------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curveforge", description=__doc__.splitlines()[0])
    p.add_argument("--out", help="output directory (overrides $CURVEFORGE_OUT)")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify-curvature", help="finite-difference check of the curvature formulas")
    v.add_argument("--preset", default="sine-m1", help=f"one of {sorted(CURVATURE_CASES)}")
    v.add_argument("--resolutions", type=int, nargs="+", default=[32, 64, 128])
    v.add_argument("--conformal", help="conformal factor phi(x) of a curved base g = exp(2 phi) delta")
    v.set_defaults(func=cmd_verify_curvature)

    lin = sub.add_parser("solve-linear", help="Galerkin solve of the linear hyperbolic equation")
    lin.add_argument("--config", help="JSON file with coefficients, data and discretisation")
    lin.add_argument("--preset", help="standing-wave")
    lin.add_argument("--format", choices=["bin", "csv"], default="bin")
    lin.set_defaults(func=cmd_solve_linear)

    s = sub.add_parser("solve", help="Picard solve of the prescribed-curvature equation")
    s.add_argument("--m", type=int, default=1)
    s.add_argument("--N", type=int, default=32)
    s.add_argument("--t0", type=float)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--s", type=int)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--D", type=float)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--rtilde", default="0", help="expression in x1..xm, t or a field file")
    s.add_argument("--phi")
    s.add_argument("--psi")
    s.add_argument("--mode", choices=["local", "small-data"], default="local")
    s.add_argument("--adaptive", action=argparse.BooleanOptionalAction, default=True)
    s.add_argument("--dt", type=float, default=2e-3)
    s.add_argument("--cutoff", type=int)
    s.add_argument("--max-iters", type=int, default=40)
    s.add_argument("--floor", action=argparse.BooleanOptionalAction, default=True,
                   help="measure the residual floor with a refined run")
    s.add_argument("--format", choices=["bin", "csv"], default="bin")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("energy-report", help="energy trace and Gronwall verdict of a solution file")
    e.add_argument("--solution", required=True)
    e.add_argument("--s", type=int)
    e.add_argument("--rtilde")
    e.set_defaults(func=cmd_energy_report)

    r = sub.add_parser("reproduce", help="rerun an acceptance experiment")
    r.add_argument("preset", help=f"one of {sorted(PRESETS)}")
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        record = args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PicardDivergence, ConvergenceError, StabilityError, ArithmeticError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    record.wall_time = time.perf_counter() - start
    out = _out_dir(args)
    record.write(out / f"{record.subcommand}_record.json")
    for name, ok in record.verdicts.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if record.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
