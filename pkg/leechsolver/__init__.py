"""Top-level package for the Leech problem solver."""

__author__ = """Leech Solver Developers"""
__email__ = "leechsolver@users.noreply.github.com"
__version__ = "0.1.0"

from .ConfigManager import ConfigManager
from .LeechSolver import LeechSolver, LeechSolverError, NotStrictlyPositiveError
from .MatrixEquations import (
    NotStrictlyPositive,
    PositivityCondition,
    ProblemData,
    RiccatiCertificate,
    compute_problem_data,
    solve_dare_stabilizing,
    solve_stein_general,
    solve_stein_symmetric,
)
from .ProblemFile import generate_instance, load_problem, save_problem
from .Realization import Realization, TransferFunction, validate_realization
from .Synthesis import SolutionBundle, synthesize
from .Verification import VerificationReport, run_identity_suite, run_operator_suite
