import numpy as np
import pytest

from leechsolver.MatrixEquations import compute_problem_data
from leechsolver.Realization import (
    DomainError,
    Realization,
    RealizationError,
    SingularityError,
    TransferFunction,
    as_matrix,
    eval_R,
    eval_R_grid,
    eval_transfer,
    eval_transfer_grid,
    mcmillan_degree_estimate,
    observability_rank,
    spectral_radius,
    validate_realization,
)
from leechsolver.ToeplitzOracle import hankel_rank


def _instance(A, C):
    n = np.asarray(A).shape[0]
    return Realization(
        A=A,
        B1=np.ones((n, 1)),
        B2=np.zeros((n, 1)),
        C=C,
        D1=[[1.0]],
        D2=[[0.0]],
    )


def test_valid_scalar_realization():
    assert validate_realization(_instance([[0.5]], [[1.0]])) == []


def test_boundary_eigenvalue_is_a_stability_violation():
    violations = validate_realization(_instance([[1.0]], [[1.0]]))
    assert [v.kind for v in violations] == ["stability"]
    assert violations[0].value == pytest.approx(1.0)


def test_decoupled_mode_is_unobservable():
    r = _instance([[0.5, 0.0], [0.0, 0.3]], [[1.0, 0.0]])
    violations = validate_realization(r)
    assert [v.kind for v in violations] == ["observability"]
    assert observability_rank(r.C, r.A) == 1


def test_dimension_mismatch_raises():
    with pytest.raises(RealizationError):
        Realization(
            A=[[0.5]],
            B1=[[1.0, 2.0]],
            B2=[[0.0]],
            C=[[1.0]],
            D1=[[1.0]],
            D2=[[0.0]],
        )


def test_one_dimensional_input_is_rejected():
    with pytest.raises(RealizationError):
        as_matrix([1.0, 2.0], "B")


def test_constant_transfer_function_ignores_z():
    tf = TransferFunction.constant([[2.0, 1.0]])
    for z in (0.0, 0.3 + 0.1j, np.exp(0.7j)):
        np.testing.assert_array_equal(eval_transfer(tf, z), [[2.0, 1.0]])


def test_eval_transfer_geometric_closed_form():
    tf = TransferFunction([[0.0]], [[1.0]], [[0.5]], [[1.0]])
    assert eval_transfer(tf, 0.5)[0, 0] == pytest.approx(2.0 / 3.0, abs=1e-15)


def test_eval_transfer_matches_power_series(rng):
    A = rng.standard_normal((2, 2))
    A *= 0.8 / spectral_radius(A)
    tf = TransferFunction(
        rng.standard_normal((2, 2)),
        rng.standard_normal((2, 2)),
        A,
        rng.standard_normal((2, 2)),
    )
    z = np.exp(1j * np.pi / 4)
    coeffs = tf.taylor(201)
    series = sum(z**v * coeffs[v] for v in range(201))
    np.testing.assert_allclose(eval_transfer(tf, z), series, atol=1e-12)


def test_eval_transfer_grid_matches_pointwise(seeded_instance):
    zs = np.exp(2j * np.pi * np.arange(7) / 7)
    values = eval_transfer_grid(seeded_instance.G, zs)
    for z, value in zip(zs, values):
        np.testing.assert_allclose(value, eval_transfer(seeded_instance.G, z))


def test_eval_transfer_at_a_pole_is_singular():
    tf = TransferFunction([[0.0]], [[1.0]], [[0.5]], [[1.0]])
    with pytest.raises(SingularityError):
        eval_transfer(tf, 2.0)


def test_R_of_constant_instance_is_R0(constant_instance):
    pd = compute_problem_data(constant_instance)
    assert eval_R(constant_instance, pd, np.exp(0.4j))[0, 0] == pytest.approx(3.0)


def test_R_at_one_equals_GG_minus_KK(seeded_instance):
    r = seeded_instance
    pd = compute_problem_data(r)
    G1 = eval_transfer(r.G, 1.0)
    K1 = eval_transfer(r.K, 1.0)
    np.testing.assert_allclose(
        eval_R(r, pd, 1.0), G1 @ G1.conj().T - K1 @ K1.conj().T, atol=1e-11
    )


def test_R_matches_symbol_on_the_circle(seeded_instance):
    r = seeded_instance
    pd = compute_problem_data(r)
    z = np.exp(2j * np.pi * 3 / 64)
    Gz = eval_transfer(r.G, z)
    Kz = eval_transfer(r.K, z)
    np.testing.assert_allclose(
        eval_R_grid(r, pd, [z])[0], Gz @ Gz.conj().T - Kz @ Kz.conj().T, atol=1e-11
    )


def test_R_off_the_circle_is_a_domain_error(constant_instance):
    pd = compute_problem_data(constant_instance)
    with pytest.raises(DomainError):
        eval_R(constant_instance, pd, 0.5)


@pytest.mark.parametrize(
    "matrix, expected",
    [
        (np.zeros((3, 3)), 0.0),
        ([[0.0, 1.0], [0.0, 0.0]], 0.0),
        ([[0.9, 100.0], [0.0, 0.2]], 0.9),
    ],
)
def test_spectral_radius(matrix, expected):
    assert spectral_radius(np.asarray(matrix)) == pytest.approx(expected)


def test_mcmillan_degree_of_constant_is_zero():
    assert mcmillan_degree_estimate(TransferFunction.constant([[1.0]])) == 0


def test_mcmillan_degree_of_minimal_scalar():
    tf = TransferFunction([[0.0]], [[1.0]], [[0.5]], [[1.0]])
    assert mcmillan_degree_estimate(tf) == 1


def test_mcmillan_degree_of_non_minimal_realization():
    # the second state is uncontrollable, the function is 1 / (1 - z / 2)
    tf = TransferFunction(
        [[1.0]], [[1.0, 1.0]], [[0.5, 0.0], [0.0, 0.3]], [[1.0], [0.0]]
    )
    assert mcmillan_degree_estimate(tf) == 1
    assert hankel_rank(tf, 20) == 1


def test_similarity_preserves_the_function(rng):
    tf = TransferFunction([[1.0]], [[1.0, 2.0]], [[0.5, 0.1], [0.0, 0.3]], [[1.0], [1.0]])
    T = rng.standard_normal((2, 2)) + 3 * np.eye(2)
    z = 0.2 + 0.3j
    np.testing.assert_allclose(eval_transfer(tf.similarity(T), z), eval_transfer(tf, z))


@pytest.mark.parametrize(
    "tf, degree",
    [
        (
            TransferFunction(
                [[1.0]], [[1.0, 2.0]], [[0.5, 0.1], [0.0, 0.3]], [[1.0], [1.0]]
            ),
            2,
        ),
        (
            TransferFunction(
                [[1.0]], [[1.0, 1.0]], [[0.5, 0.0], [0.0, 0.3]], [[1.0], [0.0]]
            ),
            1,
        ),
    ],
    ids=["minimal", "uncontrollable"],
)
def test_similarity_preserves_the_degree(tf, degree, rng):
    T = rng.standard_normal((2, 2)) + 3 * np.eye(2)
    assert mcmillan_degree_estimate(tf) == degree
    assert mcmillan_degree_estimate(tf.similarity(T)) == degree
