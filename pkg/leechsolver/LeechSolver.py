"""
Solver pipeline and command line interface.

This module provides the LeechSolver class, which runs the pipeline
load -> problem data -> Riccati certificate -> synthesis -> verification
for one instance, and the `leech` command with the subcommands solve,
verify, sweep and generate.

Exit codes of every subcommand: 0 success, 1 error (including a failed
verification), 2 the instance is not strictly positive.
"""

from __future__ import annotations

import os
from typing import Any, Dict, Optional, Union

# Third-party imports
import click
import pandas as pd
import pyarrow as pa
import pyarrow.parquet as pq

# Local imports
from . import logging_config
from .ConfigManager import ConfigManager
from .MatrixEquations import (
    NotStrictlyPositive,
    ProblemData,
    RiccatiCertificate,
    compute_problem_data,
    solve_dare_stabilizing,
)
from .ProblemFile import (
    GenerationError,
    ProblemFileError,
    generate_instance,
    load_problem,
    parse_dims,
    save_problem,
    save_solution,
)
from .Realization import NumericalError, Realization
from .Synthesis import SolutionBundle, circle_sweep, supnorm_estimate, synthesize
from .ToeplitzOracle import OraclePreconditionError
from .Verification import (
    VerificationReport,
    run_identity_suite,
    run_operator_suite,
)

logger = logging_config.logger

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_POSITIVE = 2


class LeechSolverError(Exception):
    """Custom exception for LeechSolver errors."""

    pass


class NotStrictlyPositiveError(LeechSolverError):
    """
    Raised when T_G T_G^* - T_K T_K^* is not strictly positive. The
    NotStrictlyPositive diagnosis is kept in `diagnosis`.
    """

    def __init__(self, diagnosis: NotStrictlyPositive):
        self.diagnosis = diagnosis
        super().__init__(f"not strictly positive: {diagnosis}")


class LeechSolver:
    """
    Runs the maximum entropy pipeline for one instance of the Leech
    problem G X = K.

    Args:
        config: Configuration dictionary, path to a JSON config file or
            ConfigManager instance

    Attributes:
        config (ConfigManager): Configuration manager instance
        realization (Realization): The loaded instance, if any
        problem_data (ProblemData): Stein solutions, R0 and Gamma
        certificate (RiccatiCertificate): Evidence of strict positivity
        solution (SolutionBundle): The synthesized solution

    Example:
        >>> solver = LeechSolver({"oracle_sections": 32})
        >>> solver.load("problem.json")
        >>> solver.solve()
        >>> solver.verify().passed
        True
    """

    def __init__(
        self, config: Union[Dict[str, Any], ConfigManager, str, None] = None
    ) -> None:
        self.config = ConfigManager(config)
        self.realization: Optional[Realization] = None
        self.problem_data: Optional[ProblemData] = None
        self.certificate: Optional[RiccatiCertificate] = None
        self.solution: Optional[SolutionBundle] = None
        self.problem_path: Optional[str] = None

    def load(self, path: str) -> Realization:
        """
        Load and validate a problem file.

        Raises:
            ProblemFileError: If the file is malformed or the realization
                is not stable and observable
        """
        self.problem_path = path
        self.realization = load_problem(
            path, self.config.tolerance("observability_factor")
        )
        self.problem_data = self.certificate = self.solution = None
        return self.realization

    def set_realization(self, r: Realization) -> None:
        """Use an in-memory instance instead of a problem file."""
        self.realization = r
        self.problem_path = None
        self.problem_data = self.certificate = self.solution = None

    def _require_realization(self) -> Realization:
        if self.realization is None:
            raise LeechSolverError("no problem loaded")
        return self.realization

    def certify(self) -> RiccatiCertificate:
        """
        Compute the problem data and the Riccati certificate.

        Returns:
            The certificate

        Raises:
            NotStrictlyPositiveError: With the first violated condition
        """
        r = self._require_realization()
        self.problem_data = compute_problem_data(r)
        result = solve_dare_stabilizing(r, self.problem_data, self.config)
        if isinstance(result, NotStrictlyPositive):
            logger.warning(f"Instance is not strictly positive: {result}")
            raise NotStrictlyPositiveError(result)
        self.certificate = result
        return result

    def solve(self) -> SolutionBundle:
        """
        Certify the instance and synthesize the maximum entropy solution.

        Raises:
            NotStrictlyPositiveError: If the instance is not strictly
                positive; no solution is produced
        """
        if self.certificate is None:
            self.certify()
        self.solution = synthesize(
            self.realization, self.problem_data, self.certificate
        )
        return self.solution

    def supnorm(self) -> float:
        """Grid sup-norm estimate of the solution X."""
        sol = self.solution or self.solve()
        return float(
            supnorm_estimate(
                sol.X,
                self.config.get("grid_residual"),
                refine_depth=self.config.get("supnorm_refine_depth"),
                candidates=self.config.get("supnorm_refine_candidates"),
            )
        )

    def verify(self, sections: Optional[int] = None) -> VerificationReport:
        """
        Run the identity suite and the finite-section operator suite.

        Args:
            sections: Block rows of the oracle sections; chosen from the
                spectral radii of A and A0 when omitted, never fewer than
                the configured 'oracle_sections'

        Returns:
            The merged report
        """
        sol = self.solution or self.solve()
        r, data, cert = self.realization, self.problem_data, self.certificate
        report = run_identity_suite(r, data, cert, sol, self.config)
        operator = run_operator_suite(r, data, cert, sol, sections, self.config)
        report = report.merge(operator)
        if self.problem_path:
            report.fingerprint["problem"] = self.problem_path
        return report

    def sweep(self, grid_points: Optional[int] = None) -> pd.DataFrame:
        """
        Evaluate the solution on a uniform circle grid.

        Returns:
            DataFrame with columns omega, norm_X, min_eig, interp_residual
        """
        sol = self.solution or self.solve()
        grid_points = grid_points or self.config.get("sweep_grid")
        return pd.DataFrame(circle_sweep(self.realization, sol.X, grid_points))

    def write_solution(
        self, path: Optional[str] = None, supnorm: Optional[float] = None
    ) -> str:
        sol = self.solution or self.solve()
        path = path or self.config.get("filename_solution")
        if supnorm is None:
            supnorm = self.supnorm()
        return save_solution(path, self.realization, self.certificate, sol, supnorm)

    def write_report(
        self, report: VerificationReport, path: Optional[str] = None
    ) -> str:
        """
        Write the report as JSON and append its checks to the summary CSV.
        """
        path = path or self.config.get("filename_report")
        with open(path, "w") as f:
            f.write(report.to_json() + "\n")
        logger.info(f"Report written to {path}")
        summary = report.to_dataframe()
        summary.insert(0, "seed", report.fingerprint.get("seed"))
        summary.insert(0, "problem", report.fingerprint.get("problem"))
        self.__append_to_csv(self.config.get("filename_report_summary"), summary)
        return path

    def write_sweep(self, data: pd.DataFrame, path: Optional[str] = None) -> str:
        path = path or self.config.get("filename_sweep")
        data.to_csv(path, index=False, float_format="%.17g")
        logger.info(f"Sweep of {len(data)} points written to {path}")
        if self.config.get("sweep_parquet"):
            self.csv_to_parquet([path])
        return path

    def __append_to_csv(self, path, data):
        """
        Add data from a dataframe to a CSV file. If the CSV doesn't exist
        yet, create it along with the column header row.
        """
        header = False
        mode = "a"
        if not os.path.isfile(path):
            header = True
            mode = "w"
        data.to_csv(path, mode=mode, index=False, header=header)

    def csv_to_parquet(self, csv_paths=None):
        """
        Convert CSV outputs to Parquet, keeping the original CSVs.
        """
        if csv_paths is None:
            csv_paths = [
                self.config.get("filename_report_summary"),
                self.config.get("filename_sweep"),
            ]
        written = []
        for csv_path in filter(None, csv_paths):
            if not os.path.isfile(csv_path):
                logger.warning(f"CSV not found: {csv_path}")
                continue
            root, _ = os.path.splitext(csv_path)
            parquet_path = f"{root}.parquet"
            df = pd.read_csv(csv_path)
            pq.write_table(
                pa.Table.from_pandas(df, preserve_index=False),
                parquet_path,
                compression="snappy",
            )
            logger.info(f"Parquet written to {parquet_path}")
            written.append(parquet_path)
        return written


def _apply_overrides(config: ConfigManager, sections=None, grid=None,
                     tol_scale=None, sections_key="oracle_sections",
                     grid_key="grid_residual"):
    if sections is not None:
        config.set(sections_key, sections)
        if sections_key == "sections_min" and config.get("sections_max") < sections:
            config.set("sections_max", sections)
    if grid is not None:
        config.set(grid_key, grid)
    if tol_scale is not None:
        config.set("tol_scale", tol_scale)
    config.validate()


def _run(ctx: click.Context, command) -> None:
    """Run a subcommand body and map its outcome to the exit code."""
    try:
        code = command()
    except NotStrictlyPositiveError as e:
        click.echo(f"NotStrictlyPositive: {e.diagnosis}", err=True)
        ctx.exit(EXIT_NOT_POSITIVE)
    except (
        LeechSolverError,
        ProblemFileError,
        GenerationError,
        OraclePreconditionError,
        NumericalError,
        ValueError,
        OSError,
    ) as e:
        logger.error(f"{type(e).__name__}: {e}")
        click.echo(f"error: {e}", err=True)
        ctx.exit(EXIT_ERROR)
    ctx.exit(code or EXIT_OK)


# CLI interface
@click.group()
@click.option(
    "--config",
    "-c",
    type=click.Path(exists=True),
    help="Configuration file path",
)
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]),
    default="INFO",
    help="Logging level",
)
@click.pass_context
def cli(ctx: click.Context, config: Optional[str], log_level: str) -> None:
    """Maximum entropy solutions of the Leech problem G X = K."""
    logging_config.configure(log_level)
    ctx.obj = ConfigManager(config)


input_option = click.option(
    "--input", "-i", "input_path", type=click.Path(exists=True, dir_okay=False),
    required=True, help="Problem file",
)
tol_scale_option = click.option(
    "--tol-scale", type=click.FloatRange(min=0, min_open=True),
    help="Factor applied to all residual tolerances",
)


@cli.command()
@input_option
@click.option("--output", "-o", type=click.Path(dir_okay=False),
              help="Solution file")
@click.option("--sections", type=click.IntRange(min=1),
              help="Initial block rows of the finite-section estimate of Q")
@tol_scale_option
@click.pass_context
def solve(ctx, input_path, output, sections, tol_scale):
    """Compute the maximum entropy solution and write it."""
    config = ctx.obj
    _apply_overrides(config, sections=sections, tol_scale=tol_scale,
                     sections_key="sections_min")

    def command():
        solver = LeechSolver(config)
        solver.load(input_path)
        sol = solver.solve()
        supnorm = solver.supnorm()
        solver.write_solution(output, supnorm)
        click.echo(f"entropy: {sol.entropy or 0.0:.15g}")
        click.echo(f"sup-norm estimate: {supnorm:.15g}")

    _run(ctx, command)


@cli.command()
@input_option
@click.option("--output", "-o", type=click.Path(dir_okay=False),
              help="Report file")
@click.option("--sections", type=click.IntRange(min=1),
              help="Minimum block rows of the oracle sections")
@click.option("--grid", type=click.IntRange(min=1),
              help="Circle points of the residual checks")
@tol_scale_option
@click.pass_context
def verify(ctx, input_path, output, sections, grid, tol_scale):
    """Run both verification suites and write the report."""
    config = ctx.obj
    _apply_overrides(config, sections=sections, grid=grid, tol_scale=tol_scale)

    def command():
        solver = LeechSolver(config)
        solver.load(input_path)
        report = solver.verify()
        solver.write_report(report, output)
        failures = report.failures()
        for rec in failures:
            click.echo(
                f"FAIL {rec.name}: {rec.residual:.3e} > {rec.tolerance:.3e}",
                err=True,
            )
        verdict = "PASS" if report.passed else "FAIL"
        click.echo(f"{verdict}: {len(report.records) - len(failures)}/"
                   f"{len(report.records)} checks")
        return EXIT_OK if report.passed else EXIT_ERROR

    _run(ctx, command)


@cli.command()
@input_option
@click.option("--output", "-o", type=click.Path(dir_okay=False),
              help="Sweep CSV file")
@click.option("--grid", type=click.IntRange(min=1),
              help="Number of circle points")
@click.pass_context
def sweep(ctx, input_path, output, grid):
    """Evaluate the solution over the unit circle and write a CSV."""
    config = ctx.obj
    _apply_overrides(config, grid=grid, grid_key="sweep_grid")

    def command():
        solver = LeechSolver(config)
        solver.load(input_path)
        solver.write_sweep(solver.sweep(), output)

    _run(ctx, command)


@cli.command()
@click.option("--seed", type=int, required=True, help="Random seed")
@click.option("--dims", default="4,2,2,1", show_default=True,
              help="n,m,p,q with n the total state order and m = p")
@click.option("--radius", type=float, default=0.7, show_default=True,
              help="Sup-norm of the contraction X0 in K = G X0, in (0, 1)")
@click.option("--output", "-o", type=click.Path(dir_okay=False),
              help="Problem file")
@click.pass_context
def generate(ctx, seed, dims, radius, output):
    """Write a random strictly positive instance."""
    config = ctx.obj

    def command():
        r = generate_instance(seed, parse_dims(dims), radius, config)
        path = save_problem(r, output or config.get("filename_problem"))
        click.echo(path)

    _run(ctx, command)


if __name__ == "__main__":
    cli()
