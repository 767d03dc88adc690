import numpy as np
import pytest

from leechsolver.MatrixEquations import compute_problem_data
from leechsolver.ProblemFile import generate_noncontractive_instance
from leechsolver.Realization import TransferFunction
from leechsolver.ToeplitzOracle import (
    OraclePreconditionError,
    block_toeplitz,
    build_sections,
    central_solution_taylor,
    check_inversion_identities,
    controllability_section,
    hankel_rank,
    hankel_section,
    lambda_entropy,
    positivity_margin,
    realization_taylor,
    observability_section,
    section_entropy,
    select_sections,
    tail_bound,
    toeplitz_R_section,
    toeplitz_section,
)


def test_block_toeplitz_layout():
    lower = np.arange(1.0, 4.0).reshape(3, 1, 1)
    upper = -lower
    T = block_toeplitz(lower, upper)
    expected = [[1, -2, -3], [2, 1, -2], [3, 2, 1]]
    np.testing.assert_array_equal(T, expected)


def test_constant_section_is_scaled_identity():
    T = toeplitz_section(TransferFunction.constant([[2.0]]), 3).matrix
    np.testing.assert_array_equal(T, 2.0 * np.eye(3))


def test_scalar_section_diagonals():
    tf = TransferFunction([[0.0]], [[1.0]], [[0.5]], [[1.0]])
    section = toeplitz_section(tf, 3)
    expected = [[0, 0, 0], [1, 0, 0], [0.5, 1, 0]]
    np.testing.assert_allclose(section.matrix, expected)
    assert section.block(2, 0)[0, 0] == pytest.approx(0.5)


def test_hankel_section_blocks():
    tf = TransferFunction([[0.0]], [[1.0]], [[0.5]], [[1.0]])
    H = hankel_section(tf, 3)
    # F_v = 0.5^(v-1) for v >= 1
    expected = [[1, 0.5, 0.25], [0.5, 0.25, 0.125], [0.25, 0.125, 0.0625]]
    np.testing.assert_allclose(H, expected)
    assert hankel_rank(tf, 3) == 1


def test_controllability_section():
    W = controllability_section([[0.5]], [[2.0]], 3)
    np.testing.assert_allclose(W, [[2.0, 1.0, 0.5]])


def test_T_R_is_toeplitz_plus_hankel_products(seeded_instance):
    r = seeded_instance
    N = 48
    bundle = build_sections(r, N)
    expected = (
        bundle.M
        + bundle.H_G @ bundle.H_G.conj().T
        - bundle.H_K @ bundle.H_K.conj().T
    )
    lead = (N // 2) * r.dims.m
    np.testing.assert_allclose(
        bundle.T_R[:lead, :lead], expected[:lead, :lead], atol=1e-10
    )


def test_T_R_section_of_constant_instance(constant_instance):
    pd = compute_problem_data(constant_instance)
    np.testing.assert_allclose(toeplitz_R_section(constant_instance, pd, 4), 3 * np.eye(4))


def test_constant_instance_margin_and_central_solution(constant_instance):
    for N in (1, 4, 8):
        bundle = build_sections(constant_instance, N)
        assert positivity_margin(bundle) == pytest.approx(3.0)
    bundle = build_sections(constant_instance, 8)
    X = central_solution_taylor(bundle, 4)
    np.testing.assert_allclose(X[:, 0, 0], [0.5, 0, 0, 0], atol=1e-15)
    assert section_entropy(bundle) == pytest.approx(np.log(0.75), abs=1e-14)
    assert lambda_entropy(bundle) == pytest.approx(np.log(0.75), abs=1e-14)


def test_zero_K_central_solution(scalar_instance):
    bundle = build_sections(scalar_instance, 16)
    np.testing.assert_array_equal(central_solution_taylor(bundle, 8), 0)
    np.testing.assert_array_equal(bundle.Lambda, 0)
    assert section_entropy(bundle) == pytest.approx(0.0, abs=1e-15)


def test_margin_is_nonincreasing(seeded_instance):
    bundle = build_sections(seeded_instance, 64)
    margins = [positivity_margin(bundle, N) for N in (8, 16, 32, 64)]
    assert all(a >= b - 1e-12 for a, b in zip(margins, margins[1:]))
    assert margins[-1] > 0


def test_noncontractive_instance_has_negative_margin():
    r = generate_noncontractive_instance(11, (2, 1, 1, 1))
    bundle = build_sections(r, 64)
    assert positivity_margin(bundle) < 0
    assert not bundle.positive
    with pytest.raises(OraclePreconditionError):
        central_solution_taylor(bundle, 4)
    with pytest.raises(OraclePreconditionError):
        realization_taylor(bundle, 4)


def test_inversion_identities_constant_instance(constant_instance, pipeline):
    pd, cert, _ = pipeline(constant_instance)
    bundle = build_sections(constant_instance, 6, pd, cert)
    res = check_inversion_identities(bundle, pd, cert)
    assert res.trp1p2 == pytest.approx(0.0, abs=1e-14)
    assert res.inverse_formula == pytest.approx(0.0, abs=1e-14)
    assert res.lambda_norm == pytest.approx(0.5)
    assert res.lambda_inverse == pytest.approx(0.0, abs=1e-13)


def test_inversion_identities_seeded(seeded_instance, pipeline):
    r = seeded_instance
    pd, cert, _ = pipeline(r)
    bundle = build_sections(r, 64, pd, cert)
    res = check_inversion_identities(bundle, pd, cert)
    bound = 1e-6 * res.scale
    for name in ("trp1p2", "inverse_formula", "w0_recovery", "q_recovery"):
        assert getattr(res, name) <= bound, name
    assert res.lambda_norm < 1
    assert res.lambda_inverse <= 1e-6 * (1 + 1 / positivity_margin(bundle))


def test_oracle_matches_closed_form(seeded_instance, pipeline):
    r = seeded_instance
    pd, cert, sol = pipeline(r)
    bundle = build_sections(r, 64, pd, cert)
    closed = sol.X.taylor(16)
    np.testing.assert_allclose(central_solution_taylor(bundle, 16), closed, atol=1e-6)
    np.testing.assert_allclose(realization_taylor(bundle, 16), closed, atol=1e-6)
    assert section_entropy(bundle) == pytest.approx(sol.entropy, abs=1e-6)


def test_tail_bound_for_diagonal_A():
    from leechsolver.Realization import Realization

    a = np.array([0.6, -0.3])
    C = np.array([[1.0, 2.0]])
    r = Realization(
        A=np.diag(a),
        B1=np.ones((2, 1)),
        B2=np.zeros((2, 1)),
        C=C,
        D1=[[1.0]],
        D2=[[0.0]],
    )
    rho = 0.6
    for N in (4, 16, 32):
        bound = np.linalg.norm(C, 2) * rho**N / np.sqrt(1 - rho**2)
        assert tail_bound(r, N) <= bound + 1e-15
    assert tail_bound(r, 32) < tail_bound(r, 4)


def test_hankel_factors_through_observability_and_controllability(seeded_instance):
    bundle = build_sections(seeded_instance, 12)
    np.testing.assert_allclose(
        bundle.H_G, bundle.W_obs @ bundle.W_con1, rtol=0, atol=1e-12
    )
    np.testing.assert_allclose(
        bundle.H_K, bundle.W_obs @ bundle.W_con2, rtol=0, atol=1e-12
    )
    np.testing.assert_allclose(
        bundle.W_obs, observability_section(seeded_instance.C, seeded_instance.A, 12)
    )


def test_sections_are_nested(seeded_instance):
    r = seeded_instance
    m, p, q = r.dims.m, r.dims.p, r.dims.q
    small = build_sections(r, 15)
    large = build_sections(r, 16)
    for name, rows, cols in (
        ("T_G", m, p),
        ("T_K", m, q),
        ("T_R", m, m),
        ("M", m, m),
        ("H_G", m, p),
        ("H_K", m, q),
    ):
        lead = getattr(large, name)[: 15 * rows, : 15 * cols]
        np.testing.assert_allclose(
            lead, getattr(small, name), rtol=1e-12, atol=1e-12, err_msg=name
        )
    np.testing.assert_allclose(large.W_obs[: 15 * m], small.W_obs)
    assert positivity_margin(large, 15) == pytest.approx(positivity_margin(small))


def test_central_solution_does_not_depend_on_sections(seeded_instance, pipeline):
    r = seeded_instance
    pd, cert, _ = pipeline(r)
    N = select_sections(r, pd, cert)
    bundle = build_sections(r, 2 * N, pd, cert)
    np.testing.assert_allclose(
        central_solution_taylor(bundle, 16, N),
        central_solution_taylor(bundle, 16),
        rtol=0,
        atol=1e-8,
    )


def test_central_solution_with_no_coefficients(seeded_instance):
    bundle = build_sections(seeded_instance, 8)
    X = central_solution_taylor(bundle, 0)
    assert X.shape == (0, seeded_instance.dims.p, seeded_instance.dims.q)
