import numpy as np
import pytest

from leechsolver.ConfigManager import ConfigManager
from leechsolver.MatrixEquations import (
    RiccatiCertificate,
    compute_problem_data,
    solve_dare_stabilizing,
)
from leechsolver.ProblemFile import generate_instance
from leechsolver.Realization import Realization
from leechsolver.Synthesis import synthesize

ACCEPTANCE_SEEDS = list(range(50))


def acceptance_dims(seed):
    """
    Orders up to 8 for each of G and X0 (up to 16 states for [G, K]),
    m = p <= 4 and q <= 4, varying with the seed.
    """
    order = 1 + seed % 8
    m = 1 + seed % 4
    q = 1 + (seed // 4) % 4
    return (2 * order, m, m, q)


@pytest.fixture
def config():
    return ConfigManager()


@pytest.fixture
def constant_instance():
    """G = 2, K = 1."""
    return Realization.constant([[2.0]], [[1.0]], metadata={"seed": None})


@pytest.fixture
def scalar_instance():
    """G(z) = 1 + z / (1 - z / 2), K = 0."""
    return Realization(
        A=[[0.5]], B1=[[1.0]], B2=[[0.0]], C=[[1.0]], D1=[[1.0]], D2=[[0.0]]
    )


@pytest.fixture
def seeded_instance():
    return generate_instance(7, (4, 2, 2, 1), 0.7)


@pytest.fixture
def pipeline():
    """Run problem data, certificate and synthesis on a realization."""

    def run(r, config=None):
        pd = compute_problem_data(r)
        cert = solve_dare_stabilizing(r, pd, config)
        assert isinstance(cert, RiccatiCertificate), str(cert)
        return pd, cert, synthesize(r, pd, cert)

    return run


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
