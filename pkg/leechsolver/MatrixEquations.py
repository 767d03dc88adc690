"""
Stein equations, problem data and the stabilizing solution of the
algebraic Riccati equation

    Q = A^* Q A + (C - Gamma^* Q A)^* (R0 - Gamma^* Q Gamma)^-1 (C - Gamma^* Q A).

The stabilizing solution is computed from finite sections of
Q = W_obs^* T_R^-1 W_obs (or, optionally, by scipy's Schur method) and then
polished by Newton steps, each of which is one general Stein solve.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import scipy.linalg

from . import logging_config
from .ConfigManager import ConfigManager
from .Realization import (
    NumericalError,
    Realization,
    SingularityError,
    circle_points,
    eval_R_grid,
    is_strictly_positive,
    matrix_norm,
    min_eigenvalue,
    observability_matrix,
    spectral_radius,
)

logger = logging_config.logger


class SteinSolverError(NumericalError):
    """Raised when a symmetric Stein equation has no unique solution."""


class RiccatiSolverError(NumericalError):
    """Raised when the Riccati iteration does not converge."""


def _hermitian(M):
    return (M + M.conj().T) / 2


def solve_stein_symmetric(A, B):
    """
    Solve P - A P A^* = B B^* for a stable A.

    Parameters
    ----------
    A : (n, n) array_like
        Matrix with spectral radius less than one.
    B : (n, k) array_like

    Returns
    -------
    numpy.ndarray
        The Hermitian positive semidefinite solution P.

    Raises
    ------
    SteinSolverError
        If the spectral radius of A is not less than one.
    """
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise ValueError(f"incompatible shapes {A.shape} and {B.shape}")
    if n == 0:
        return np.zeros((0, 0), dtype=complex)
    rho = spectral_radius(A)
    if rho >= 1:
        raise SteinSolverError(
            f"P - APA^* = BB^* has no unique solution: spectral radius {rho} >= 1"
        )
    P = scipy.linalg.solve_discrete_lyapunov(A, B @ B.conj().T)
    return _hermitian(P)


def solve_stein_general(E, F, S, resonance_tol=1e-10):
    """
    Solve X - E X F = S through the Kronecker form
    (I - F^T kron E) vec(X) = vec(S).

    Parameters
    ----------
    E : (n, n) array_like
    F : (k, k) array_like
    S : (n, k) array_like
    resonance_tol : float
        Products of eigenvalues closer than this to 1 are a resonance.

    Returns
    -------
    numpy.ndarray
        The unique (n, k) solution.

    Raises
    ------
    SingularityError
        If an eigenvalue of E times an eigenvalue of F equals 1.
    """
    E = np.asarray(E, dtype=complex)
    F = np.asarray(F, dtype=complex)
    S = np.asarray(S, dtype=complex)
    n, k = S.shape
    if E.shape != (n, n) or F.shape != (k, k):
        raise ValueError(
            f"incompatible shapes E{E.shape}, F{F.shape} for S{S.shape}"
        )
    if n == 0 or k == 0:
        return np.zeros((n, k), dtype=complex)
    products = np.outer(scipy.linalg.eigvals(E), scipy.linalg.eigvals(F))
    gap = float(np.min(np.abs(1.0 - products)))
    if gap < resonance_tol:
        raise SingularityError(
            f"X - EXF = S is singular: an eigenvalue product is within {gap:.3e} of 1",
            condition=1.0 / max(gap, np.finfo(float).tiny),
        )
    K = np.eye(n * k) - np.kron(F.T, E)
    x = np.linalg.solve(K, S.reshape(-1, order="F"))
    return x.reshape((n, k), order="F")


@dataclass(frozen=True, eq=False)
class ProblemData:
    """
    Matrices derived from a realization:

        P1 - A P1 A^* = B1 B1^*,  P2 - A P2 A^* = B2 B2^*,
        R0 = D1 D1^* - D2 D2^* + C (P1 - P2) C^*,
        Gamma = B1 D1^* - B2 D2^* + A (P1 - P2) C^*.
    """

    P1: np.ndarray
    P2: np.ndarray
    R0: np.ndarray
    Gamma: np.ndarray

    @property
    def N(self):
        """P2 - P1."""
        return self.P2 - self.P1


def compute_problem_data(r: Realization) -> ProblemData:
    """
    Solve the two symmetric Stein equations and form R0 and Gamma.
    """
    P1 = solve_stein_symmetric(r.A, r.B1)
    P2 = solve_stein_symmetric(r.A, r.B2)
    dP = P1 - P2
    R0 = r.D1 @ r.D1.conj().T - r.D2 @ r.D2.conj().T + r.C @ dP @ r.C.conj().T
    Gamma = (
        r.B1 @ r.D1.conj().T - r.B2 @ r.D2.conj().T + r.A @ dP @ r.C.conj().T
    )
    return ProblemData(P1=P1, P2=P2, R0=_hermitian(R0), Gamma=Gamma)


def stein_residuals(r: Realization, pd: ProblemData):
    """Residual norms of the two symmetric Stein equations for P1 and P2."""
    A = r.A
    res1 = pd.P1 - A @ pd.P1 @ A.conj().T - r.B1 @ r.B1.conj().T
    res2 = pd.P2 - A @ pd.P2 @ A.conj().T - r.B2 @ r.B2.conj().T
    return matrix_norm(res1), matrix_norm(res2)


class PositivityCondition(enum.Enum):
    """The conditions under which T_G T_G^* - T_K T_K^* is strictly positive."""

    TOEPLITZ_R = "toeplitz_R"
    DELTA = "delta"
    RICCATI = "riccati"
    A0_STABILITY = "a0_stability"
    Q_POSITIVE = "q_positive"
    CONDITION_II = "condition_ii"

    @property
    def description(self):
        return {
            "toeplitz_R": "T_R is not strictly positive (no stabilizing Q)",
            "delta": "Delta = R0 - Gamma^* Q Gamma is not strictly positive",
            "riccati": "Q does not satisfy the Riccati equation",
            "a0_stability": "A0 = A - Gamma C0 is not stable",
            "q_positive": "Q is not strictly positive",
            "condition_ii": "Q^-1 + P2 - P1 is not strictly positive",
        }[self.value]


@dataclass(frozen=True)
class NotStrictlyPositive:
    """
    Diagnosis returned when T_G T_G^* - T_K T_K^* is not strictly
    positive. `eigenvalue` is the offending eigenvalue (or spectral radius
    for A0, or residual for the Riccati equation).
    """

    condition: PositivityCondition
    eigenvalue: float
    message: str = ""

    def __str__(self):
        text = f"{self.condition.value}: {self.condition.description}"
        if self.message:
            text += f" ({self.message})"
        return text

    def to_dict(self):
        return {
            "condition": self.condition.value,
            "eigenvalue": self.eigenvalue,
            "message": self.message,
        }


@dataclass(frozen=True, eq=False)
class RiccatiCertificate:
    """
    The stabilizing solution Q with the evidence that both conditions of
    strict positivity hold.
    """

    Q: np.ndarray
    Delta: np.ndarray
    C0: np.ndarray
    A0: np.ndarray
    rho_a0: float
    min_eig_delta: float
    min_eig_q: float
    riccati_residual: float
    min_eig_cond_ii: float
    stein_residual: float
    sections: int = 0
    iterations: int = 0
    method: str = "sections"

    def summary(self):
        """Scalar evidence, for solution files and logs."""
        return {
            "rho_a0": self.rho_a0,
            "min_eig_delta": self.min_eig_delta,
            "min_eig_q": self.min_eig_q,
            "riccati_residual": self.riccati_residual,
            "min_eig_cond_ii": self.min_eig_cond_ii,
            "stein_residual": self.stein_residual,
            "sections": self.sections,
            "iterations": self.iterations,
            "method": self.method,
        }


def riccati_terms(r: Realization, pd: ProblemData, Q):
    """
    Delta = R0 - Gamma^* Q Gamma, C0 = Delta^-1 (C - Gamma^* Q A) and
    A0 = A - Gamma C0 for a given Q.
    """
    Gh = pd.Gamma.conj().T
    Delta = _hermitian(pd.R0 - Gh @ Q @ pd.Gamma)
    L = r.C - Gh @ Q @ r.A
    if L.shape[1] == 0:
        return Delta, np.zeros_like(L), np.array(r.A, dtype=complex)
    try:
        C0 = scipy.linalg.solve(Delta, L, assume_a="her")
    except (np.linalg.LinAlgError, ValueError) as e:
        raise SingularityError(f"Delta is singular: {e}") from e
    A0 = r.A - pd.Gamma @ C0
    return Delta, C0, A0


def riccati_residual(r: Realization, pd: ProblemData, Q):
    """Norm of Q - A^*QA - (C - Gamma^*QA)^* Delta^-1 (C - Gamma^*QA)."""
    if Q.size == 0:
        return 0.0
    Delta, C0, _ = riccati_terms(r, pd, Q)
    L = r.C - pd.Gamma.conj().T @ Q @ r.A
    res = Q - r.A.conj().T @ Q @ r.A - L.conj().T @ C0
    return matrix_norm(res)


def compute_omega(pd: ProblemData, Q) -> Tuple[np.ndarray, float]:
    """
    Omega = (P1 - P2)(I + Q(P2 - P1))^-1, cross-checked against
    (P1 - P2)(Q^-1 + P2 - P1)^-1 Q^-1.

    Returns
    -------
    (numpy.ndarray, float)
        Omega and the norm of the difference between the two forms.
    """
    n = Q.shape[0]
    if n == 0:
        return np.zeros((0, 0), dtype=complex), 0.0
    N = pd.N
    I = np.eye(n)
    # X (I + QN) = -N  <=>  (I + QN)^T X^T = -N^T
    omega = np.linalg.solve((I + Q @ N).T, (-N).T).T
    try:
        cho = scipy.linalg.cho_factor(_hermitian(Q), lower=True)
        Qinv = scipy.linalg.cho_solve(cho, I.astype(complex))
        other = -N @ np.linalg.solve(Qinv + N, Qinv)
        discrepancy = matrix_norm(omega - other)
    except (np.linalg.LinAlgError, ValueError):
        logger.warning("Q is not positive definite; second form of Omega skipped")
        discrepancy = float("nan")
    return omega, discrepancy


def q_section_estimate(r: Realization, pd: ProblemData, sections: int):
    """
    Q_N = W_obs,N^* T_R,N^-1 W_obs,N from N block rows.

    Returns
    -------
    numpy.ndarray or None
        None if the section of T_R is not positive definite.
    """
    from .ToeplitzOracle import toeplitz_R_section

    T = toeplitz_R_section(r, pd, sections)
    W = observability_matrix(r.C, r.A, sections)
    try:
        cho = scipy.linalg.cho_factor(T, lower=True)
    except np.linalg.LinAlgError:
        return None
    return _hermitian(W.conj().T @ scipy.linalg.cho_solve(cho, W))


def _schur_estimate(r: Realization, pd: ProblemData):
    # X = -Q solves scipy's DARE with B = Gamma, R = R0, S = C^*, Q_are = 0
    n = r.A.shape[0]
    X = scipy.linalg.solve_discrete_are(
        r.A, pd.Gamma, np.zeros((n, n)), pd.R0, s=r.C.conj().T
    )
    return _hermitian(-X)


def refine_riccati(
    r: Realization,
    pd: ProblemData,
    Q_start,
    tol=1e-13,
    max_iter=50,
    accept_tol=1e-10,
):
    """
    Newton refinement of a Riccati solution. Each step solves

        Q+ - A0^* Q+ A0 = C^* C0 + C0^* C - C0^* R0 C0

    with C0, A0 taken from the current iterate.

    Parameters
    ----------
    r : Realization
    pd : ProblemData
    Q_start : numpy.ndarray
        Starting point, close enough to the stabilizing solution that A0
        is stable.
    tol : float
        Stop when the residual drops below tol * (1 + ||Q||).
    max_iter : int
        Iteration budget.
    accept_tol : float
        The best iterate is accepted when its residual is below
        accept_tol * (1 + ||Q||), even if `tol` was not reached.

    Returns
    -------
    (numpy.ndarray, int)
        The refined Q and the number of Newton steps taken.

    Raises
    ------
    RiccatiSolverError
        If the iteration breaks down or does not reach `accept_tol`.
    """
    Q = _hermitian(np.asarray(Q_start, dtype=complex))
    if Q.size == 0:
        return Q, 0
    Ch = r.C.conj().T
    best_Q = Q
    best = riccati_residual(r, pd, Q)
    iterations = 0
    for k in range(1, max_iter + 1):
        try:
            Delta, C0, A0 = riccati_terms(r, pd, Q)
            S = Ch @ C0 + C0.conj().T @ r.C - C0.conj().T @ pd.R0 @ C0
            Q_new = _hermitian(solve_stein_general(A0.conj().T, A0, S))
            residual = riccati_residual(r, pd, Q_new)
        except NumericalError as e:
            raise RiccatiSolverError(f"Newton step {k} broke down: {e}") from e
        if not np.all(np.isfinite(Q_new)) or not np.isfinite(residual):
            raise RiccatiSolverError(f"Newton step {k} produced non-finite values")
        iterations = k
        logger.debug(f"Newton step {k}: Riccati residual {residual:.3e}")
        Q = Q_new
        if residual < best:
            best, best_Q = residual, Q_new
        elif k > 1:
            # Stagnation at rounding level
            break
        if residual <= tol * (1.0 + matrix_norm(Q)):
            break
    if best > accept_tol * (1.0 + matrix_norm(best_Q)):
        raise RiccatiSolverError(
            f"Newton refinement did not converge: residual {best:.3e} after "
            f"{iterations} steps"
        )
    return best_Q, iterations


def _as_config(config) -> ConfigManager:
    if isinstance(config, ConfigManager):
        return config
    return ConfigManager(config)


def _symbol_check(r, pd, config):
    _, zs = circle_points(config.get("grid_symbol"))
    values = eval_R_grid(r, pd, zs)
    values = (values + np.conj(np.swapaxes(values, 1, 2))) / 2
    eigs = np.linalg.eigvalsh(values)
    smallest = float(eigs[:, 0].min())
    scale = float(np.abs(eigs).max()) if eigs.size else 0.0
    return smallest, scale


def _sections_estimate(r, pd, config):
    tol = config.tolerance("section")
    n_max = config.get("sections_max")
    N = config.initial_sections(spectral_radius(r.A))
    logger.info(f"Estimating Q from finite sections, starting with N={N}")
    Q = q_section_estimate(r, pd, N)
    if Q is None:
        return None, N
    while True:
        if 2 * N > n_max:
            logger.warning(
                f"Section estimate of Q not converged at sections_max={n_max}; "
                "continuing with Newton refinement"
            )
            return Q, N
        Q_next = q_section_estimate(r, pd, 2 * N)
        if Q_next is None:
            return None, 2 * N
        change = matrix_norm(Q_next - Q) / (1.0 + matrix_norm(Q_next))
        logger.debug(f"Sections {N} -> {2 * N}: relative change of Q {change:.3e}")
        Q, N = Q_next, 2 * N
        if change < tol:
            return Q, N


def solve_dare_stabilizing(
    r: Realization,
    pd: ProblemData,
    opts: Union[ConfigManager, dict, None] = None,
) -> Union[RiccatiCertificate, NotStrictlyPositive]:
    """
    Decide strict positivity of T_G T_G^* - T_K T_K^* and compute the
    stabilizing Riccati solution.

    The conditions are checked in this order and the first failure is
    returned: T_R strictly positive (symbol on the circle, then Cholesky of
    its sections), Delta strictly positive, Riccati residual, stability of
    A0, Q strictly positive, Q^-1 + P2 - P1 strictly positive.

    Parameters
    ----------
    r : Realization
    pd : ProblemData
    opts : ConfigManager or dict, optional
        Solver configuration.

    Returns
    -------
    RiccatiCertificate or NotStrictlyPositive

    Raises
    ------
    RiccatiSolverError
        If the Newton refinement does not converge.
    """
    config = _as_config(opts)
    tol_pd = config.tolerance("pd")
    n = r.A.shape[0]

    smallest, scale = _symbol_check(r, pd, config)
    if smallest <= tol_pd * (1.0 + scale):
        return NotStrictlyPositive(
            PositivityCondition.TOEPLITZ_R,
            smallest,
            f"min eigenvalue of R on the circle is {smallest:.6g}",
        )

    method = config.get_riccati_method()
    sections = 0
    if n == 0:
        Q = np.zeros((0, 0), dtype=complex)
        method = "constant"
    else:
        Q = None
        if method == "schur":
            try:
                Q = _schur_estimate(r, pd)
            except (np.linalg.LinAlgError, ValueError) as e:
                logger.warning(f"Schur method failed ({e}); using finite sections")
                method = "sections"
        if Q is None:
            Q, sections = _sections_estimate(r, pd, config)
            if Q is None:
                from .ToeplitzOracle import toeplitz_R_section

                eig = min_eigenvalue(toeplitz_R_section(r, pd, sections))
                return NotStrictlyPositive(
                    PositivityCondition.TOEPLITZ_R,
                    eig,
                    f"section of T_R with N={sections} is not positive definite",
                )

    Q, iterations = refine_riccati(
        r,
        pd,
        Q,
        tol=config.tolerance("newton"),
        max_iter=config.get("newton_max_iter"),
        accept_tol=config.tolerance("riccati"),
    )
    return certify(
        r, pd, Q, config, sections=sections, iterations=iterations, method=method
    )


def certify(r, pd, Q, config=None, sections=0, iterations=0, method="given"):
    """
    Check a candidate Q against every condition of strict positivity.

    Returns
    -------
    RiccatiCertificate or NotStrictlyPositive
    """
    config = _as_config(config)
    tol_pd = config.tolerance("pd")
    n = Q.shape[0]
    Q = _hermitian(Q)

    try:
        Delta, C0, A0 = riccati_terms(r, pd, Q)
    except SingularityError as e:
        return NotStrictlyPositive(PositivityCondition.DELTA, 0.0, str(e))
    min_eig_delta = min_eigenvalue(Delta)
    if not is_strictly_positive(Delta, tol_pd):
        return NotStrictlyPositive(
            PositivityCondition.DELTA,
            min_eig_delta,
            f"min eigenvalue of Delta is {min_eig_delta:.6g}",
        )

    residual = riccati_residual(r, pd, Q)
    if residual > config.tolerance("riccati") * (1.0 + matrix_norm(Q)):
        return NotStrictlyPositive(
            PositivityCondition.RICCATI, residual, f"residual {residual:.3e}"
        )

    rho_a0 = spectral_radius(A0)
    if rho_a0 >= 1:
        return NotStrictlyPositive(
            PositivityCondition.A0_STABILITY,
            rho_a0,
            f"spectral radius of A0 is {rho_a0:.6g}",
        )

    min_eig_q = min_eigenvalue(Q)
    if n > 0 and not is_strictly_positive(Q, tol_pd):
        return NotStrictlyPositive(
            PositivityCondition.Q_POSITIVE,
            min_eig_q,
            f"min eigenvalue of Q is {min_eig_q:.6g}",
        )

    min_eig_cond_ii = float("inf")
    if n > 0:
        I = np.eye(n, dtype=complex)
        cho = scipy.linalg.cho_factor(Q, lower=True)
        cond_ii = _hermitian(scipy.linalg.cho_solve(cho, I) + pd.N)
        min_eig_cond_ii = min_eigenvalue(cond_ii)
        # I + L^* N L is congruent to Q^-1 + N when Q = L L^*
        L = np.tril(cho[0])
        congruent = min_eigenvalue(I + L.conj().T @ pd.N @ L)
        if np.sign(congruent) != np.sign(min_eig_cond_ii):
            logger.warning(
                "Q^-1 + P2 - P1 and its congruent form disagree in sign: "
                f"{min_eig_cond_ii:.3e} vs {congruent:.3e}"
            )
        if not is_strictly_positive(cond_ii, tol_pd):
            return NotStrictlyPositive(
                PositivityCondition.CONDITION_II,
                min_eig_cond_ii,
                f"min eigenvalue of Q^-1 + P2 - P1 is {min_eig_cond_ii:.6g}",
            )

    stein = matrix_norm(Q - r.A.conj().T @ Q @ A0 - r.C.conj().T @ C0)
    cert = RiccatiCertificate(
        Q=Q,
        Delta=Delta,
        C0=C0,
        A0=A0,
        rho_a0=rho_a0,
        min_eig_delta=min_eig_delta,
        min_eig_q=min_eig_q,
        riccati_residual=residual,
        min_eig_cond_ii=min_eig_cond_ii,
        stein_residual=stein,
        sections=sections,
        iterations=iterations,
        method=method,
    )
    logger.info(
        f"Riccati certificate obtained ({method}, N={sections}, "
        f"{iterations} Newton steps): rho(A0)={rho_a0:.4f}, "
        f"min eig Delta={min_eig_delta:.4g}, residual={residual:.2e}"
    )
    return cert
