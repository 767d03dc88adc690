import numpy as np
import pytest

from leechsolver.ConfigManager import ConfigManager
from leechsolver.MatrixEquations import (
    NotStrictlyPositive,
    PositivityCondition,
    RiccatiCertificate,
    SteinSolverError,
    certify,
    compute_omega,
    compute_problem_data,
    q_section_estimate,
    refine_riccati,
    riccati_residual,
    solve_dare_stabilizing,
    solve_stein_general,
    solve_stein_symmetric,
    stein_residuals,
)
from leechsolver.ProblemFile import (
    compose_instance,
    generate_instance,
    generate_noncontractive_instance,
)
from leechsolver.Realization import Realization, SingularityError, TransferFunction
from leechsolver.ToeplitzOracle import build_sections, positivity_margin


def test_stein_symmetric_with_zero_A():
    B = np.array([[1.0, 2.0], [0.5, -1.0]])
    np.testing.assert_allclose(solve_stein_symmetric(np.zeros((2, 2)), B), B @ B.T)


def test_stein_symmetric_scalar():
    assert solve_stein_symmetric([[0.5]], [[1.0]])[0, 0] == pytest.approx(4.0 / 3.0)


def test_stein_symmetric_matches_kronecker_solve(rng):
    A = rng.standard_normal((3, 3))
    A *= 0.9 / np.max(np.abs(np.linalg.eigvals(A)))
    B = rng.standard_normal((3, 2))
    P = solve_stein_symmetric(A, B)
    K = np.eye(9) - np.kron(A.conj(), A)
    expected = np.linalg.solve(K, (B @ B.T).reshape(-1, order="F")).reshape(
        3, 3, order="F"
    )
    np.testing.assert_allclose(P, expected, atol=1e-12)
    np.testing.assert_allclose(P, P.conj().T)


def test_stein_symmetric_rejects_unstable_A():
    with pytest.raises(SteinSolverError):
        solve_stein_symmetric([[1.0]], [[1.0]])


def test_stein_general_with_zero_coefficient():
    S = np.arange(6.0).reshape(3, 2)
    np.testing.assert_allclose(
        solve_stein_general(np.zeros((3, 3)), np.eye(2), S), S
    )
    np.testing.assert_allclose(
        solve_stein_general(np.eye(3), np.zeros((2, 2)), S), S
    )


def test_stein_general_scalar():
    assert solve_stein_general([[0.5]], [[0.5]], [[3.0]])[0, 0] == pytest.approx(4.0)


def test_stein_general_residual(rng):
    E = 0.4 * rng.standard_normal((3, 3))
    F = 0.4 * rng.standard_normal((2, 2))
    S = rng.standard_normal((3, 2))
    X = solve_stein_general(E, F, S)
    np.testing.assert_allclose(X - E @ X @ F, S, atol=1e-12)


def test_stein_general_resonance():
    with pytest.raises(SingularityError):
        solve_stein_general([[2.0]], [[0.5]], [[1.0]])


def test_problem_data_for_zero_K(scalar_instance):
    pd = compute_problem_data(scalar_instance)
    assert pd.P1[0, 0] == pytest.approx(4.0 / 3.0)
    assert pd.P2[0, 0] == pytest.approx(0.0)
    assert pd.R0[0, 0] == pytest.approx(7.0 / 3.0)
    assert pd.Gamma[0, 0] == pytest.approx(5.0 / 3.0)


def test_problem_data_for_constant_instance(constant_instance):
    pd = compute_problem_data(constant_instance)
    assert pd.P1.shape == (0, 0)
    assert pd.Gamma.shape == (0, 1)
    assert pd.R0[0, 0] == pytest.approx(3.0)


def test_problem_data_residuals(seeded_instance):
    pd = compute_problem_data(seeded_instance)
    res1, res2 = stein_residuals(seeded_instance, pd)
    assert res1 <= 1e-12 * (1 + np.linalg.norm(pd.P1, 2))
    assert res2 <= 1e-12 * (1 + np.linalg.norm(pd.P2, 2))


def test_constant_instance_certificate(constant_instance):
    pd = compute_problem_data(constant_instance)
    cert = solve_dare_stabilizing(constant_instance, pd)
    assert isinstance(cert, RiccatiCertificate)
    assert cert.Q.shape == (0, 0)
    assert cert.Delta[0, 0] == pytest.approx(3.0)
    assert cert.method == "constant"


def test_constant_instance_with_negative_R0():
    r = Realization.constant([[1.0]], [[2.0]])
    result = solve_dare_stabilizing(r, compute_problem_data(r))
    assert isinstance(result, NotStrictlyPositive)
    assert result.condition is PositivityCondition.TOEPLITZ_R
    assert result.eigenvalue == pytest.approx(-3.0)


def test_scalar_riccati_selects_stabilizing_root(scalar_instance):
    pd = compute_problem_data(scalar_instance)
    cert = solve_dare_stabilizing(scalar_instance, pd)
    assert isinstance(cert, RiccatiCertificate)
    # the other root 0.75 of the scalar quadratic gives |a0| = 2
    assert cert.Q[0, 0] == pytest.approx(0.48, abs=1e-12)
    assert cert.Delta[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert cert.C0[0, 0] == pytest.approx(0.6, abs=1e-12)
    assert cert.A0[0, 0] == pytest.approx(-0.5, abs=1e-12)
    assert cert.rho_a0 < 1


def test_non_stabilizing_root_is_rejected(scalar_instance):
    pd = compute_problem_data(scalar_instance)
    result = certify(scalar_instance, pd, np.array([[0.75]]))
    assert isinstance(result, NotStrictlyPositive)
    assert result.condition is PositivityCondition.A0_STABILITY


@pytest.mark.parametrize("method", ["sections", "schur"])
def test_certificate_on_seeded_instance(seeded_instance, method):
    r = seeded_instance
    pd = compute_problem_data(r)
    cert = solve_dare_stabilizing(r, pd, {"riccati_method": method})
    assert isinstance(cert, RiccatiCertificate), str(cert)
    scale = 1 + np.linalg.norm(cert.Q, 2)
    assert riccati_residual(r, pd, cert.Q) <= 1e-10 * scale
    assert cert.rho_a0 < 1
    assert cert.min_eig_delta > 0
    assert cert.min_eig_q > 0
    assert cert.min_eig_cond_ii > 0
    assert cert.stein_residual <= 1e-10 * scale


def test_both_methods_agree(seeded_instance):
    r = seeded_instance
    pd = compute_problem_data(r)
    Q1 = solve_dare_stabilizing(r, pd, {"riccati_method": "sections"}).Q
    Q2 = solve_dare_stabilizing(r, pd, {"riccati_method": "schur"}).Q
    np.testing.assert_allclose(Q1, Q2, atol=1e-9 * (1 + np.linalg.norm(Q1, 2)))


def test_section_estimate_matches_certificate(seeded_instance):
    r = seeded_instance
    pd = compute_problem_data(r)
    cert = solve_dare_stabilizing(r, pd)
    Q_N = q_section_estimate(r, pd, 128)
    np.testing.assert_allclose(Q_N, cert.Q, atol=1e-8 * (1 + np.linalg.norm(cert.Q, 2)))


def test_newton_refinement_from_perturbed_start(seeded_instance):
    r = seeded_instance
    pd = compute_problem_data(r)
    cert = solve_dare_stabilizing(r, pd)
    Q, iterations = refine_riccati(r, pd, cert.Q * (1 + 1e-4))
    assert iterations >= 1
    np.testing.assert_allclose(Q, cert.Q, atol=1e-10 * (1 + np.linalg.norm(Q, 2)))


def test_omega_forms_agree(seeded_instance):
    pd = compute_problem_data(seeded_instance)
    cert = solve_dare_stabilizing(seeded_instance, pd)
    omega, discrepancy = compute_omega(pd, cert.Q)
    assert discrepancy <= 1e-10 * (1 + np.linalg.norm(omega, 2))
    N = pd.N
    np.testing.assert_allclose(
        omega + N + N @ cert.Q @ omega, 0, atol=1e-10 * (1 + np.linalg.norm(omega, 2))
    )


def test_noncontractive_instance_is_not_strictly_positive():
    r = generate_noncontractive_instance(3, (2, 1, 1, 1))
    result = solve_dare_stabilizing(r, compute_problem_data(r))
    assert isinstance(result, NotStrictlyPositive)
    assert result.to_dict()["condition"] in {c.value for c in PositivityCondition}


def test_constant_contraction_above_one_fails_symbol_check():
    G = TransferFunction([[1.0]], [[1.0]], [[0.5]], [[1.0]])
    r = compose_instance(G, TransferFunction.constant([[1.5]]))
    result = solve_dare_stabilizing(r, compute_problem_data(r))
    assert isinstance(result, NotStrictlyPositive)
    assert result.condition is PositivityCondition.TOEPLITZ_R
    assert "toeplitz_R" in str(result)


def test_unknown_riccati_method_is_rejected():
    with pytest.raises(ValueError):
        ConfigManager({"riccati_method": "bisection"})


def test_shift_with_constant_K_fails_condition_ii():
    # G(z) = z, K = 1/2: R = 3/4 > 0 and Q = 4/3, but Q^-1 - P1 = -1/4
    r = Realization(
        A=[[0.0]], B1=[[1.0]], B2=[[0.0]], C=[[1.0]], D1=[[0.0]], D2=[[0.5]]
    )
    pd = compute_problem_data(r)
    result = solve_dare_stabilizing(r, pd)
    assert isinstance(result, NotStrictlyPositive)
    assert result.condition is PositivityCondition.CONDITION_II
    assert result.eigenvalue == pytest.approx(-0.25, abs=1e-10)
    bundle = build_sections(r, 64, pd)
    for N in (16, 32, 64):
        assert positivity_margin(bundle, N) == pytest.approx(-0.25, abs=1e-10)


@pytest.mark.parametrize(
    "make",
    [
        lambda seed: generate_instance(seed, (2 + seed % 3, 1, 1, 1), 0.7),
        lambda seed: generate_noncontractive_instance(seed, (2 + seed % 3, 1, 1, 1)),
    ],
    ids=["contractive", "noncontractive"],
)
@pytest.mark.parametrize("seed", range(4))
def test_certificate_agrees_with_section_margins(make, seed):
    r = make(seed)
    pd = compute_problem_data(r)
    result = solve_dare_stabilizing(r, pd)
    bundle = build_sections(r, 64, pd)
    margins = [positivity_margin(bundle, N) for N in (16, 32, 64)]
    # leading sections of a nested family: the smallest eigenvalue only drops
    assert margins[0] >= margins[1] - 1e-12 >= margins[2] - 2e-12
    if isinstance(result, RiccatiCertificate):
        assert min(margins) > 0
    else:
        assert margins[-1] < 0
