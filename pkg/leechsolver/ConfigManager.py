import json
import math
import os

from . import logging_config

logger = logging_config.logger


class ConfigManager:
    """
    A Config Manager simplifies working with the solver configuration. The
    configuration specifies where problem, solution and report files are
    written, which numerical tolerances are used to decide strict positivity
    and to accept identity residuals, how the Riccati equation is solved,
    and how many points the circle grids use.

    The config object, passed as an argument when initializing a
    ConfigManager, is a dictionary with the properties listed below. To see
    all of the default values for the config object, see the
    ConfigManager.defaults property.

    - Filenames. Where output is written when the orchestrator is asked to
      save its results.
        - filename_problem : str
            The problem file written by the instance generator.
        - filename_solution : str
            The JSON file with the realizations of X, U, V, V^-1 and Theta,
            the entropy and the Riccati certificate scalars.
        - filename_report : str
            The JSON verification report.
        - filename_report_summary : str
            A CSV table with one row per verification check.
        - filename_sweep : str
            The CSV file written by the circle sweep.
        - filename_config : str
            The path and filename to save the configuration to.

    - Tolerances. Every key that starts with 'tol_' is a tolerance. A
      shortcut dictionary without the prefix is available as
      ConfigManager.tols. Residual tolerances are multiplied by
      'tol_scale' when read through ConfigManager.tolerance().
        - tol_pd : float
            Relative margin used to call a Hermitian matrix strictly
            positive: its smallest eigenvalue must exceed
            tol_pd * (1 + norm).
        - tol_rank : float
            Relative singular value cut-off for McMillan degree estimates.
        - tol_observability_factor : float
            Factor in the observability rank tolerance
            n * norm * machine-eps * factor.
        - tol_section : float
            Two successive finite-section estimates of Q are considered
            converged when they differ by less than this (relative).
        - tol_newton : float
            Relative Riccati residual at which Newton refinement stops.
        - tol_riccati : float
            Accepted Riccati and Stein residual, relative to 1 + norm(Q).
        - tol_identity : float
            Accepted residual of the algebraic identities of the solution.
        - tol_resolvent : float
            Accepted residual of the resolvent identity on the circle.
        - tol_spectral_factor : float
            Accepted residual of I - X*X - Theta*Theta on the circle.
        - tol_interpolation : float
            Accepted residual of G X - K and G U - K V on the circle.
        - tol_oracle : float
            Accepted residual of the finite-section operator identities,
            relative to 1 + norm of the inverse Toeplitz section.
        - tol_taylor : float
            Absolute agreement of Taylor coefficients of X between the
            realization and the finite-section oracle.
        - tol_entropy : float
            Relative agreement between the entropy integral and
            -ln det D_V.
        - tol_scale : float
            Multiplier for all residual tolerances (CLI --tol-scale).

    - Riccati equation.
        - riccati_method : 'sections' or 'schur'
            'sections' computes Q = W_obs^* T_R^-1 W_obs on growing finite
            sections; 'schur' uses scipy.linalg.solve_discrete_are and
            falls back to sections on failure. Both are followed by Newton
            refinement.
        - sections_min : int
            Smallest number of block rows used for the section estimate.
        - sections_max : int
            Largest number of block rows before giving up on convergence
            of the section estimate.
        - newton_max_iter : int
            Iteration budget of the Newton refinement.

    - Grids on the unit circle.
        - grid_residual : int
            Points used for interpolation and spectral factor residuals.
        - grid_entropy : int
            Points used for the trapezoidal entropy integral.
        - grid_resolvent : int
            Points used for the resolvent identity.
        - grid_symbol : int
            Points used to test positivity of the symbol R on the circle
            before any section is factored.
        - supnorm_refine_candidates : int
            Number of grid maxima refined by a bounded scalar search.
        - supnorm_refine_depth : int
            Iteration limit of each bounded search.

    - Finite-section oracle.
        - oracle_sections : int
            Minimum number of block rows N of the sections used by the
            operator suite. N grows with the spectral radii of A and A0
            until the section estimate of Q settles.
        - taylor_count : int
            Number of Taylor coefficients compared with the oracle.

    - Verification.
        - promote_closing_identity : bool
            If True, the identity
            C1^*C1 - C2^*C2 = (Q + QNQ) - A0^*(Q + QNQ)A0 is a mandatory
            check instead of an informational one.

    - Instance generator.
        - generator_pole_radius : float
            Spectral radius of the state matrices of the random factors.
        - generator_zero_radius : float
            Upper bound for the spectral radius of A - B D^-1 C of G, which
            makes G invertible outer.
        - generator_max_retries : int
            Sampling attempts before giving up.

    - Sweep.
        - sweep_grid : int
            Number of points of the circle sweep.
        - sweep_parquet : bool
            Also write a Parquet copy of the sweep CSV.
    """

    defaults = {
        # Output files
        "filename_problem": "problem.json",
        "filename_solution": "solution.json",
        "filename_report": "report.json",
        "filename_report_summary": "report_summary.csv",
        "filename_sweep": "sweep.csv",
        "filename_config": "config",
        # Tolerances
        "tol_pd": 1e-10,
        "tol_rank": 1e-10,
        "tol_observability_factor": 64.0,
        "tol_section": 1e-9,
        "tol_newton": 1e-13,
        "tol_riccati": 1e-10,
        "tol_identity": 1e-10,
        "tol_resolvent": 1e-9,
        "tol_spectral_factor": 1e-8,
        "tol_interpolation": 1e-9,
        "tol_oracle": 1e-6,
        "tol_taylor": 1e-6,
        "tol_entropy": 1e-6,
        "tol_scale": 1.0,
        # Riccati equation
        "riccati_method": "sections",
        "sections_min": 64,
        "sections_max": 1024,
        "newton_max_iter": 50,
        # Circle grids
        "grid_residual": 512,
        "grid_entropy": 4096,
        "grid_resolvent": 32,
        "grid_symbol": 512,
        "supnorm_refine_candidates": 4,
        "supnorm_refine_depth": 60,
        # Finite-section oracle
        "oracle_sections": 64,
        "taylor_count": 16,
        # Verification
        "promote_closing_identity": False,
        # Instance generator
        "generator_pole_radius": 0.7,
        "generator_zero_radius": 0.6,
        "generator_max_retries": 100,
        # Sweep
        "sweep_grid": 512,
        "sweep_parquet": False,
    }

    riccati_methods = ("sections", "schur")

    # Tolerances that are not residual bounds and are never rescaled
    unscaled_tols = ("pd", "rank", "observability_factor", "section", "newton")

    def __init__(self, config=None):
        """
        Parameters
        ----------
        config : dict or str or ConfigManager, optional
            The solver config object, a path to a JSON file containing the
            config object, or another ConfigManager to copy.
        """

        if config is None:
            config = {}

        if isinstance(config, ConfigManager):
            config = config.config.copy()

        if isinstance(config, (str, os.PathLike)):
            path = os.fspath(config)
            config = self.read(path)
            if config.get("filename_config") is None:
                config["filename_config"] = path

        if not isinstance(config, dict):
            raise ValueError("config must be a dict or a path to a JSON file")

        self.input_config = config
        self.config = self.defaults | config
        # Save a copy of the original config object, since the CLI overrides
        # some values
        self.original_config = self.config.copy()

        self.validate()

        # Make a shortcut to the tolerances
        self.tols = {}
        for k in self.config.keys():
            if k.startswith("tol_"):
                self.tols[k.removeprefix("tol_")] = self.config[k]

    def validate(self):
        """
        Check that the configured values can be used by the solver.

        Raises
        ------
        ValueError
            If the Riccati method is unknown or a grid or section size is
            not a positive integer.
        """
        self.get_riccati_method()
        for key in (
            "sections_min",
            "sections_max",
            "newton_max_iter",
            "grid_residual",
            "grid_entropy",
            "grid_resolvent",
            "grid_symbol",
            "oracle_sections",
            "taylor_count",
            "sweep_grid",
            "generator_max_retries",
        ):
            value = self.config.get(key)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{key} must be a positive integer, got {value!r}")
        if self.config["sections_max"] < self.config["sections_min"]:
            raise ValueError("sections_max must not be smaller than sections_min")
        if not self.config["tol_scale"] > 0:
            raise ValueError("tol_scale must be positive")

    def write(self, updated=False):
        """
        Save the configuration to a JSON file.

        Parameters
        ----------
        updated : boolean
            If True, then a suffix will be added to the filename to
            indicate that it is an updated version.
        """
        filename = self.get("filename_config")
        if updated:
            filename = "{0}_{2}{1}".format(*os.path.splitext(filename), "updated")
        with open(filename, "w") as f:
            json.dump(self.config, f, indent=4)
        return filename

    def read(self, filename):
        """
        Load the configuration from a file.

        Parameters
        ----------
        filename : str
            The file to load from.

        Returns
        -------
        config : dict
            The configuration dictionary.
        """
        with open(filename, "r") as f:
            config = json.load(f)
        return config

    def set(self, key, value):
        """
        Add a property to the config object.

        Parameters
        ----------
        key : str
            The key to add.
        value : any
            The value to add.
        """
        self.config[key] = value
        if key.startswith("tol_"):
            self.tols[key.removeprefix("tol_")] = value

    def get(self, key):
        """
        Get a property from the config object.

        Parameters
        ----------
        key : str
            The key to get.

        Returns
        -------
        any
            The property.
        """
        return self.config.get(key)

    def get_config_names(self):
        """
        Get all property names from the config object.

        Returns
        -------
        list
            The property names.
        """
        return list(self.config.keys())

    def get_config_values(self):
        """
        Get all property values from the config object.

        Returns
        -------
        list
            The property values.
        """
        return list(self.config.values())

    def tolerance(self, name):
        """
        Get a tolerance by its name without the 'tol_' prefix. Residual
        tolerances are multiplied by 'tol_scale'.

        Parameters
        ----------
        name : str
            For example 'identity' or 'riccati'.

        Returns
        -------
        float
        """
        if name not in self.tols:
            raise ValueError(f"Unknown tolerance: {name}")
        value = float(self.tols[name])
        if name in self.unscaled_tols:
            return value
        return value * float(self.tols["scale"])

    def get_riccati_method(self):
        """
        Get the configured Riccati method.

        Returns
        -------
        str
            'sections' or 'schur'.
        """
        method = self.config.get("riccati_method")
        if method not in self.riccati_methods:
            raise ValueError(
                f"riccati_method must be one of {self.riccati_methods}, "
                f"got {method!r}"
            )
        return method

    def initial_sections(self, rho):
        """
        Number of block rows to start the finite-section estimate of Q
        with, given the spectral radius of the state matrix.

        Parameters
        ----------
        rho : float
            Spectral radius, less than one.

        Returns
        -------
        int
            max(sections_min, 8 * ceil(1 / (1 - rho))), capped at
            sections_max.
        """
        n_min = self.get("sections_min")
        n_max = self.get("sections_max")
        if rho >= 1:
            return n_max
        return min(n_max, max(n_min, 8 * math.ceil(1.0 / (1.0 - rho))))
