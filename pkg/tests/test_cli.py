"""Command-line subcommands, exit codes and run records."""
import json
import subprocess
import sys

import numpy as np
import pytest

from curveforge.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, RunRecord, main
from curveforge.fieldio import read_field, write_field
from curveforge.torus import SpaceTimeField, TorusGrid

FAST_SOLVE = ["--m", "1", "--N", "16", "--cutoff", "4", "--dt", "5e-3"]


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv("CURVEFORGE_OUT", str(tmp_path))
    return tmp_path


def record(out, name):
    return json.loads((out / f"{name}_record.json").read_text())


class TestVerifyCurvature:
    def test_flat_zero(self, out):
        assert main(["verify-curvature", "--preset", "flat-zero", "--resolutions", "16", "32"]) == EXIT_OK
        rows = (out / "verify_curvature.csv").read_text().splitlines()
        assert rows[0] == "N,identity,max_error,halving_ratio"

    def test_sine(self, out):
        assert main(["verify-curvature", "--preset", "sine-m1", "--resolutions", "16", "32"]) == EXIT_OK
        rec = record(out, "verify-curvature")
        ratios = [r[3] for r in rec["diagnostics"]["rows"] if r[3] is not None]
        assert all(3.0 <= q <= 5.0 for q in ratios)

    def test_conformal_base(self, out):
        argv = ["verify-curvature", "--preset", "sine-m1", "--resolutions", "16", "32", "--conformal", "0.1*sin(x)"]
        assert main(argv) == EXIT_OK

    def test_out_flag_wins(self, out, tmp_path):
        other = tmp_path / "other"
        main(["--out", str(other), "verify-curvature", "--preset", "flat-zero", "--resolutions", "8", "16"])
        assert (other / "verify-curvature_record.json").exists()

    @pytest.mark.parametrize("argv,field", [
        (["--preset", "nope"], "preset"),
        (["--resolutions", "16"], "resolutions"),
        (["--resolutions", "15", "30"], "resolutions"),
    ])
    def test_config_errors(self, out, capsys, argv, field):
        assert main(["verify-curvature", *argv]) == EXIT_CONFIG
        assert f"config error: {field}" in capsys.readouterr().err


class TestSolveLinear:
    def test_standing_wave(self, out):
        assert main(["solve-linear", "--preset", "standing-wave"]) == EXIT_OK
        rec = record(out, "solve-linear")
        assert rec["diagnostics"]["c0_error"] <= 1e-6
        assert {"lhs", "rhs", "ratio"} <= set(rec["diagnostics"]["apriori"])
        assert isinstance(read_field(out / "linear_solution.bin"), SpaceTimeField)

    def test_config_file(self, out, tmp_path):
        cfg = tmp_path / "lin.json"
        cfg.write_text(json.dumps({"N": 16, "T": 0.5, "dt": 5e-3, "alpha": "1 + 0.2*sin(x)",
                                   "phi": "cos(x)", "tol": 1e-6}))
        assert main(["solve-linear", "--config", str(cfg), "--format", "csv"]) == EXIT_OK
        assert (out / "linear_solution.csv").exists()

    def test_bad_alpha(self, out, tmp_path, capsys):
        cfg = tmp_path / "lin.json"
        cfg.write_text(json.dumps({"N": 16, "alpha": "sin(x)"}))
        assert main(["solve-linear", "--config", str(cfg)]) == EXIT_CONFIG
        assert "alpha" in capsys.readouterr().err

    def test_missing_source(self, out):
        assert main(["solve-linear"]) == EXIT_CONFIG


class TestSolve:
    def test_small_data(self, out):
        argv = ["solve", "--mode", "small-data", "--rtilde", "1e-3*sin(x)*sin(t)", "--T", "1", *FAST_SOLVE]
        assert main(argv) == EXIT_OK
        rec = record(out, "solve")
        diag = rec["diagnostics"]
        assert rec["verdicts"]["converged"] and rec["verdicts"]["residual_within_10x_floor"]
        assert {"d", "ratios", "t0_history"} <= set(diag["report"])
        assert diag["thresholds"]["k_local_min"] == 2
        assert (out / "solution.bin").exists() and (out / "residual.bin").exists()

    def test_local_with_data(self, out):
        argv = ["solve", "--phi", "0.05*sin(x)", "--rtilde", "0.01*cos(x)", "--T", "0.5", "--no-floor", *FAST_SOLVE]
        assert main(argv) == EXIT_OK

    def test_divergence_is_computation_failure(self, out):
        argv = ["solve", "--phi", "3*sin(x)", "--rtilde", "50*cos(x)", "--no-adaptive", "--max-iters", "4",
                "--no-floor", *FAST_SOLVE]
        assert main(argv) == EXIT_FAIL

    @pytest.mark.parametrize("argv,field", [
        (["--N", "7"], "N"), (["--m", "0"], "m"), (["--T", "-1"], "T"), (["--t0", "5"], "t0"),
        (["--tol", "0"], "tol"), (["--D", "-1"], "D"), (["--dt", "0"], "dt"), (["--k", "0"], "k"),
        (["--s", "1"], "s"), (["--s", "9"], "s"), (["--cutoff", "8"], "cutoff"),
        (["--rtilde", "open('x')"], "rtilde"), (["--phi", "y"], "phi"),
        (["--mode", "small-data", "--phi", "sin(x)"], "phi"),
    ])
    def test_config_errors(self, out, capsys, argv, field):
        assert main(["solve", "--N", "16", *argv]) == EXIT_CONFIG
        assert f"config error: {field}:" in capsys.readouterr().err
        assert not (out / "solve_record.json").exists()

    def test_deterministic_report(self, out, tmp_path):
        argv = ["solve", "--phi", "0.05*sin(x)", "--rtilde", "0.01*cos(x)", "--T", "0.25", "--no-floor", *FAST_SOLVE]
        texts = []
        for name in ("a", "b"):
            main(["--out", str(tmp_path / name), *argv])
            rec = RunRecord.from_json((tmp_path / name / "solve_record.json").read_text())
            texts.append(rec.to_json(include_wall_time=False))
        assert texts[0] == texts[1]


class TestEnergyReport:
    def test_zero_solution(self, out, tmp_path):
        g = TorusGrid(1, 16)
        write_field(tmp_path / "z.bin", SpaceTimeField.from_function(g, np.linspace(0, 1, 6), lambda x, t: 0 * x))
        assert main(["energy-report", "--solution", str(tmp_path / "z.bin")]) == EXIT_OK
        table = np.loadtxt(out / "energy_trace.csv", delimiter=",", skiprows=1)
        assert not np.any(table[:, 1:])
        assert json.loads((out / "energy_verdict.json").read_text())["verdicts"]["gronwall"]

    def test_wave(self, out, tmp_path):
        g = TorusGrid(1, 16)
        u = SpaceTimeField.from_function(g, np.linspace(0, 1, 51), lambda x, t: 0.1 * np.cos(t) * np.sin(x))
        write_field(tmp_path / "u.csv", u)
        assert main(["energy-report", "--solution", str(tmp_path / "u.csv"), "--s", "2", "--rtilde", "0.01*sin(x)"]) == EXIT_OK

    def test_missing_file(self, out, tmp_path):
        assert main(["energy-report", "--solution", str(tmp_path / "none.bin")]) == EXIT_CONFIG


class TestReproduce:
    def test_unknown_preset(self, out, capsys):
        assert main(["reproduce", "thm99"]) == EXIT_CONFIG
        assert "preset" in capsys.readouterr().err


class TestRunRecord:
    def test_round_trip(self):
        rec = RunRecord("solve", {"b": 1, "a": [1.5]}, {"x": np.float64(2.0)}, {"ok": True}, 1.25)
        back = RunRecord.from_json(rec.to_json())
        assert back.to_json() == rec.to_json()
        assert back.passed
        assert "wall_time" not in rec.to_json(include_wall_time=False)


class TestModuleEntryPoint:
    def test_help_lists_subcommands(self):
        res = subprocess.run([sys.executable, "-m", "curveforge", "--help"], capture_output=True, text=True)
        assert res.returncode == 0
        for name in ("verify-curvature", "solve-linear", "solve", "energy-report", "reproduce"):
            assert name in res.stdout
