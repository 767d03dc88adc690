import json
import os

import pandas as pd
import pytest
from click.testing import CliRunner

from leechsolver.LeechSolver import (
    EXIT_ERROR,
    EXIT_NOT_POSITIVE,
    LeechSolver,
    LeechSolverError,
    NotStrictlyPositiveError,
    cli,
)
from leechsolver.MatrixEquations import PositivityCondition
from leechsolver.ProblemFile import generate_instance, read_solution, save_problem
from leechsolver.Realization import Realization


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _line(output, prefix):
    for line in output.splitlines():
        if line.startswith(prefix):
            return line[len(prefix):].strip()
    raise AssertionError(f"no line starting with {prefix!r} in {output!r}")


def test_generate_writes_a_loadable_problem(runner, workdir):
    result = runner.invoke(
        cli, ["generate", "--seed", "3", "--dims", "3,1,1,1", "-o", "p.json"]
    )
    assert result.exit_code == 0, result.output
    assert "p.json" in result.output
    data = json.loads((workdir / "p.json").read_text())
    assert data["dimensions"] == {"n": 3, "m": 1, "p": 1, "q": 1}
    assert data["metadata"]["seed"] == 3


def test_generate_rejects_non_square_dims(runner, workdir):
    result = runner.invoke(cli, ["generate", "--seed", "0", "--dims", "2,2,1,1"])
    assert result.exit_code == EXIT_ERROR
    assert not (workdir / "problem.json").exists()


def test_solve_zero_K_has_zero_entropy(runner, workdir, scalar_instance):
    save_problem(scalar_instance, "zero.json")
    result = runner.invoke(cli, ["solve", "-i", "zero.json", "-o", "sol.json"])
    assert result.exit_code == 0, result.output
    assert abs(float(_line(result.output, "entropy:"))) <= 1e-12
    assert float(_line(result.output, "sup-norm estimate:")) <= 1e-12
    solution = read_solution("sol.json")
    assert solution["certificate"]["rho_a0"] < 1


def test_solve_constant_instance(runner, workdir, constant_instance):
    save_problem(constant_instance, "constant.json")
    result = runner.invoke(cli, ["solve", "-i", "constant.json"])
    assert result.exit_code == 0, result.output
    assert float(_line(result.output, "entropy:")) == pytest.approx(
        -0.2876820724517809, abs=1e-12
    )
    assert os.path.isfile("solution.json")


def test_solve_not_strictly_positive_exits_2(runner, workdir):
    save_problem(Realization.constant([[1.0]], [[2.0]]), "bad.json")
    result = runner.invoke(cli, ["solve", "-i", "bad.json", "-o", "sol.json"])
    assert result.exit_code == EXIT_NOT_POSITIVE
    assert "NotStrictlyPositive" in result.output
    assert PositivityCondition.TOEPLITZ_R.value in result.output
    assert not (workdir / "sol.json").exists()


def test_malformed_problem_exits_1(runner, workdir):
    (workdir / "broken.json").write_text('{"schema": "leechsolver.problem",')
    result = runner.invoke(cli, ["solve", "-i", "broken.json"])
    assert result.exit_code == EXIT_ERROR
    assert "line 1" in result.output


def test_verify_seeded_instance(runner, workdir, seeded_instance):
    save_problem(seeded_instance, "seeded.json")
    result = runner.invoke(
        cli, ["verify", "-i", "seeded.json", "-o", "report.json", "--sections", "64"]
    )
    assert result.exit_code == 0, result.output
    assert "PASS:" in result.output
    report = json.loads((workdir / "report.json").read_text())
    assert report["fingerprint"]["problem"] == "seeded.json"
    summary = pd.read_csv(workdir / "report_summary.csv")
    assert {"problem", "seed", "name", "residual", "passed"} <= set(summary.columns)
    assert summary["seed"].unique().tolist() == [7]


def test_verify_slow_poles_passes_with_default_sections(runner, workdir):
    r = generate_instance(1, (4, 2, 2, 1), 0.7, {"generator_pole_radius": 0.97})
    save_problem(r, "slow.json")
    result = runner.invoke(cli, ["verify", "-i", "slow.json", "-o", "report.json"])
    assert result.exit_code == 0, result.output
    report = json.loads((workdir / "report.json").read_text())
    assert report["fingerprint"]["sections"] > 64


def test_verify_fails_with_tiny_tolerances(runner, workdir, seeded_instance):
    save_problem(seeded_instance, "seeded.json")
    (workdir / "strict.json").write_text(json.dumps({"tol_interpolation": 1e-30}))
    result = runner.invoke(
        cli, ["-c", "strict.json", "verify", "-i", "seeded.json", "--grid", "64"]
    )
    assert result.exit_code == EXIT_ERROR
    assert "FAIL interpolation" in result.output


def test_sweep_writes_csv(runner, workdir, scalar_instance):
    save_problem(scalar_instance, "zero.json")
    result = runner.invoke(
        cli, ["sweep", "-i", "zero.json", "-o", "sweep.csv", "--grid", "32"]
    )
    assert result.exit_code == 0, result.output
    df = pd.read_csv(workdir / "sweep.csv")
    assert list(df.columns) == ["omega", "norm_X", "min_eig", "interp_residual"]
    assert len(df) == 32
    assert (df["min_eig"] > 0).all()


def test_config_file_is_used(runner, workdir, scalar_instance):
    save_problem(scalar_instance, "zero.json")
    (workdir / "config.json").write_text(json.dumps({"filename_sweep": "mine.csv"}))
    result = runner.invoke(
        cli, ["-c", "config.json", "sweep", "-i", "zero.json", "--grid", "8"]
    )
    assert result.exit_code == 0, result.output
    assert (workdir / "mine.csv").exists()


def test_report_summary_accumulates(workdir, constant_instance):
    solver = LeechSolver()
    solver.set_realization(constant_instance)
    report = solver.verify(sections=4)
    solver.write_report(report)
    solver.write_report(report)
    summary = pd.read_csv("report_summary.csv")
    assert len(summary) == 2 * len(report.records)


def test_sweep_to_parquet(workdir, scalar_instance):
    solver = LeechSolver({"sweep_parquet": True, "sweep_grid": 16})
    solver.set_realization(scalar_instance)
    solver.write_sweep(solver.sweep())
    written = pd.read_parquet(workdir / "sweep.parquet")
    assert len(written) == 16
    pd.testing.assert_frame_equal(written, pd.read_csv(workdir / "sweep.csv"))


def test_csv_to_parquet_skips_missing_files(workdir):
    assert LeechSolver().csv_to_parquet(["missing.csv"]) == []


def test_solver_requires_a_problem():
    with pytest.raises(LeechSolverError):
        LeechSolver().solve()


def test_solver_raises_with_diagnosis():
    solver = LeechSolver()
    solver.set_realization(Realization.constant([[1.0]], [[2.0]]))
    with pytest.raises(NotStrictlyPositiveError) as excinfo:
        solver.solve()
    assert excinfo.value.diagnosis.condition is PositivityCondition.TOEPLITZ_R
    assert solver.solution is None
