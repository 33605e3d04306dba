import subprocess
import sys

import numpy as np
import pytest

from sharpstep.cli import (
    CSV_HEADER,
    ConfigError,
    main,
    parse_config_text,
    write_trace_csv,
)
from sharpstep.problems import load_instance, make_abs
from sharpstep.solver import Constant, SolveConfig, solve

PR_CFG = """
# exact phase retrieval at desk scale
problem.kind = phase_retrieval
problem.d = 30
problem.m = 240
problem.seed = 3
schedule.kind = polyak
solve.max_iters = 200
init.delta = 0.25
"""

QUAD_GEO_CFG = """
problem.kind = analytic
problem.name = quad1d
schedule.kind = geometric
schedule.lam = {lam}
schedule.q = 0.5
solve.max_iters = 20
init.delta = 0.4
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestConfigParsing:
    def test_comments_and_types(self):
        cfg = parse_config_text(
            "problem.kind = phase_retrieval  # inline comment\n"
            "\n"
            "problem.d = 10\n"
            "problem.corrupted = true\n"
            "problem.p = 0.2\n"
        )
        assert cfg["problem.d"] == 10
        assert cfg["problem.corrupted"] is True
        assert cfg["problem.p"] == 0.2

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config_text("problem.dd = 10\n")

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="expected"):
            parse_config_text("problem.d 10\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("problem.d = 10\nproblem.d = 11\n")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="bad value"):
            parse_config_text("problem.d = ten\n")


class TestGen:
    def test_gen_and_reload(self, tmp_path, capsys):
        cfg = write(tmp_path, "gen.cfg", PR_CFG)
        out = str(tmp_path / "pr.inst")
        assert main(["gen", "--config", cfg, "--out", out]) == 0
        assert "phase_retrieval d=30 m=240" in capsys.readouterr().out
        inst = load_instance(out)
        assert inst.spec.d == 30

    def test_gen_rejects_odd_cov_m(self, tmp_path, capsys):
        cfg = write(tmp_path, "bad.cfg",
                    "problem.kind = covariance\nproblem.d = 50\n"
                    "problem.r = 3\nproblem.m = 401\n")
        code = main(["gen", "--config", cfg, "--out", str(tmp_path / "x.inst")])
        assert code == 2

    def test_gen_corruption_count(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.cfg",
                    "problem.kind = phase_retrieval\nproblem.d = 2\n"
                    "problem.m = 100000\nproblem.corrupted = true\n"
                    "problem.seed = 5\n")
        assert main(["gen", "--config", cfg, "--out", str(tmp_path / "c.inst")]) == 0
        out = capsys.readouterr().out
        count = int(out.split("corrupted_count=")[1].split()[0])
        assert abs(count / 100000 - 0.1) <= 0.005

    def test_seed_flag_overrides(self, tmp_path):
        cfg = write(tmp_path, "gen.cfg", PR_CFG)
        a, b = str(tmp_path / "a.inst"), str(tmp_path / "b.inst")
        main(["gen", "--config", cfg, "--out", a])
        main(["gen", "--config", cfg, "--out", b, "--seed", "99"])
        assert load_instance(a).spec.seed == 3
        assert load_instance(b).spec.seed == 99


class TestRun:
    def test_run_writes_trace_and_meta(self, tmp_path, capsys):
        cfg = write(tmp_path, "run.cfg", PR_CFG)
        out = tmp_path / "trace.csv"
        assert main(["run", "--config", cfg, "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) <= 202
        final = float(lines[-1].split(",")[2])
        assert final <= 1e-6  # normalized distance after polyak on exact data
        meta = (tmp_path / "trace.csv.meta").read_text()
        assert "splitmix64+box-muller" in meta
        assert "status" in meta

    def test_run_byte_identical(self, tmp_path):
        cfg = write(tmp_path, "run.cfg", PR_CFG)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["run", "--config", cfg, "--out", str(a)])
        main(["run", "--config", cfg, "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_run_from_instance_file(self, tmp_path):
        cfg = write(tmp_path, "gen.cfg", PR_CFG)
        inst_path = str(tmp_path / "pr.inst")
        main(["gen", "--config", cfg, "--out", inst_path])
        run_cfg = write(tmp_path, "run2.cfg",
                        f"problem.file = {inst_path}\n"
                        "schedule.kind = polyak\nsolve.max_iters = 100\n"
                        "init.seed = 3\n")
        out = tmp_path / "t.csv"
        assert main(["run", "--config", run_cfg, "--out", str(out)]) == 0
        assert out.exists()

    def test_polyak_needs_known_minimum(self, tmp_path):
        cfg = write(tmp_path, "bad.cfg",
                    "problem.kind = phase_retrieval\nproblem.d = 10\n"
                    "problem.m = 60\nproblem.corrupted = true\n"
                    "schedule.kind = polyak\n")
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "t.csv")]) == 2

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_oracle_failure_exit_code(self, tmp_path):
        cfg = write(tmp_path, "blow.cfg", QUAD_GEO_CFG.format(lam="1e200"))
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "t.csv")]) == 3

    def test_missing_config(self, tmp_path):
        assert main(["run", "--out", str(tmp_path / "t.csv")]) == 2

    def test_missing_out(self, tmp_path):
        cfg = write(tmp_path, "run.cfg", PR_CFG)
        assert main(["run", "--config", cfg]) == 2


class TestSweep:
    def test_single_value_matches_run(self, tmp_path):
        cfg = write(tmp_path, "run.cfg", PR_CFG)
        single = tmp_path / "single.csv"
        main(["run", "--config", cfg, "--out", str(single)])
        sweep_dir = tmp_path / "sweep"
        assert main(["sweep", "--config", cfg, "--axis", "problem.m=240",
                     "--out", str(sweep_dir)]) == 0
        assert (sweep_dir / "run_240.csv").read_bytes() == single.read_bytes()

    def test_summary_and_partial_failure(self, tmp_path, capsys):
        cfg = write(tmp_path, "cov.cfg",
                    "problem.kind = covariance\nproblem.d = 8\nproblem.r = 2\n"
                    "problem.m = 40\nproblem.seed = 2\n"
                    "schedule.kind = polyak\nsolve.max_iters = 200\n")
        out_dir = tmp_path / "sw"
        assert main(["sweep", "--config", cfg, "--axis", "problem.m=40,41,160",
                     "--out", str(out_dir)]) == 0
        lines = (out_dir / "summary.csv").read_text().splitlines()
        assert lines[0] == "axis_value,status,final_distance,fitted_q,iters"
        rows = {ln.split(",")[0]: ln.split(",") for ln in lines[1:]}
        assert rows["41"][1] == "config-error"
        assert rows["40"][1] in ("max-iters", "zero-subgradient-exit",
                                 "tolerance-met")
        assert float(rows["160"][2]) < 1e-6

    def test_unknown_axis_key(self, tmp_path):
        cfg = write(tmp_path, "run.cfg", PR_CFG)
        assert main(["sweep", "--config", cfg, "--axis", "nope=1",
                     "--out", str(tmp_path / "d")]) == 2


class TestEstimate:
    def test_grid_estimation_on_quad1d(self, tmp_path, capsys):
        from sharpstep.problems import make_quad1d, save_instance
        inst_path = tmp_path / "quad.inst"
        save_instance(inst_path, make_quad1d())
        assert main(["estimate", str(inst_path), "--grid=-2,2,2001"]) == 0
        out = capsys.readouterr().out
        mu = float(out.split("mu_hat  =")[1].split()[0])
        rho = float(out.split("rho_hat =")[1].split()[0])
        L = float(out.split("L_hat   =")[1].split()[0])
        tau = float(out.split("tau_hat =")[1].split()[0])
        assert abs(mu - 1.0) <= 1e-3
        assert 1.9 <= rho <= 2.0 + 1e-9
        assert 2.99 <= L <= 3.0
        assert abs(tau - 1.0 / 3.0) <= 0.01

    def test_sphere_estimation_on_abs(self, tmp_path, capsys):
        from sharpstep.problems import save_instance
        inst_path = tmp_path / "abs.inst"
        save_instance(inst_path, make_abs())
        assert main(["estimate", str(inst_path), "--samples", "2000",
                     "--radius", "0.9", "--seed", "11"]) == 0
        out = capsys.readouterr().out
        tau = float(out.split("tau_hat =")[1].split()[0])
        assert tau == pytest.approx(1.0, abs=1e-9)

    def test_grid_rejected_for_multidim(self, tmp_path):
        from sharpstep.problems import save_instance
        inst_path = tmp_path / "l1.inst"
        from sharpstep.problems import make_l1
        save_instance(inst_path, make_l1())
        assert main(["estimate", str(inst_path), "--grid=-1,1,101"]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["estimate", str(tmp_path / "nope.inst")]) == 2


class TestVerify:
    def test_verify_passes_and_writes_report(self, tmp_path, capsys):
        out = tmp_path / "report.txt"
        assert main(["verify", "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "CHECK no-stationary-quad1d pass" in stdout
        assert "CHECK no-stationary-l1 pass" in stdout
        report = out.read_text().splitlines()
        assert all(ln.startswith("CHECK ") for ln in report)
        assert all(" pass " in ln for ln in report)


class TestCsvWriter:
    def test_na_distance_column(self, tmp_path):
        inst = make_abs()
        import dataclasses
        problem = dataclasses.replace(inst.problem, distance=None)
        tr = solve(problem, Constant(0.25), np.array([1.0]),
                   SolveConfig(max_iters=4))
        out = tmp_path / "na.csv"
        write_trace_csv(out, tr)
        lines = out.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert all(ln.split(",")[2] == "NA" for ln in lines[1:])

    def test_seventeen_digit_floats(self, tmp_path):
        inst = make_abs()
        tr = solve(inst.problem, Constant(1.0 / 3.0), np.array([1.0]),
                   SolveConfig(max_iters=2))
        out = tmp_path / "digits.csv"
        write_trace_csv(out, tr)
        row = out.read_text().splitlines()[2]
        assert "0.33333333333333331" in row

    def test_lf_line_endings(self, tmp_path):
        inst = make_abs()
        tr = solve(inst.problem, Constant(0.5), np.array([1.0]),
                   SolveConfig(max_iters=2))
        out = tmp_path / "lf.csv"
        write_trace_csv(out, tr)
        raw = out.read_bytes()
        assert b"\r" not in raw
        assert raw.endswith(b"\n")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "sharpstep", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "sharpstep" in res.stdout
