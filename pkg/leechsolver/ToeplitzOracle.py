"""
Finite sections of the block Toeplitz, Hankel, observability and
controllability operators attached to a realization, and the central
(maximum entropy) solution computed directly from those sections.

Nothing here uses the Riccati equation, which makes the module an
independent check of the closed-form synthesis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from . import logging_config
from .ConfigManager import ConfigManager
from .MatrixEquations import (
    ProblemData,
    RiccatiCertificate,
    compute_omega,
    compute_problem_data,
    q_section_estimate,
    solve_stein_symmetric,
)
from .Realization import (
    Realization,
    TransferFunction,
    matrix_norm,
    min_eigenvalue,
    observability_matrix,
    spectral_radius,
)

logger = logging_config.logger


class OraclePreconditionError(ValueError):
    """Raised when a section of T_G T_G^* - T_K T_K^* is not positive definite."""


def taylor_coefficients(tf: TransferFunction, count: int) -> np.ndarray:
    """F_0 = D and F_v = C A^(v-1) B for v < count, shape (count, k, r)."""
    return tf.taylor(count)


def block_toeplitz(lower, upper=None):
    """
    Assemble an N x N block Toeplitz matrix.

    Parameters
    ----------
    lower : array of shape (N, k, r)
        Block (i, j) for i >= j is lower[i - j].
    upper : array of shape (N, k, r), optional
        Block (i, j) for i < j is upper[j - i]; upper[0] is ignored. Zero
        if omitted, which gives a block lower triangular matrix.

    Returns
    -------
    numpy.ndarray
        Dense (N k) x (N r) matrix.
    """
    lower = np.asarray(lower)
    N, k, r = lower.shape
    if upper is None:
        upper = np.zeros_like(lower)
    # offsets d = i - j in [-(N-1), N-1] stored at d + N - 1
    coeffs = np.concatenate([np.asarray(upper)[:0:-1], lower], axis=0)
    idx = np.arange(N)[:, None] - np.arange(N)[None, :] + N - 1
    blocks = coeffs[idx]
    return blocks.transpose(0, 2, 1, 3).reshape(N * k, N * r)


@dataclass(frozen=True, eq=False)
class BlockToeplitzSection:
    """Leading N x N block section of a block lower triangular Toeplitz operator."""

    block_rows: int
    block_cols: int
    sections: int
    matrix: np.ndarray
    symbol: str = ""

    def block(self, i, j):
        k, r = self.block_rows, self.block_cols
        return self.matrix[i * k : (i + 1) * k, j * r : (j + 1) * r]


def toeplitz_section(tf: TransferFunction, N: int, symbol="") -> BlockToeplitzSection:
    k, r = tf.shape
    matrix = block_toeplitz(taylor_coefficients(tf, N))
    return BlockToeplitzSection(k, r, N, matrix, symbol)


def observability_section(C, A, N):
    """[C; CA; ...; CA^(N-1)]."""
    return observability_matrix(C, A, N)


def controllability_section(A, B, N):
    """[B, AB, ..., A^(N-1) B]."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    cols = []
    X = B
    for _ in range(N):
        cols.append(X)
        X = A @ X
    return np.hstack(cols) if cols else np.zeros((A.shape[0], 0), dtype=complex)


def hankel_section(tf: TransferFunction, N: int) -> np.ndarray:
    """N x N block Hankel matrix with block (i, j) equal to F_(i+j+1)."""
    k, r = tf.shape
    coeffs = taylor_coefficients(tf, 2 * N)
    idx = np.arange(N)[:, None] + np.arange(N)[None, :] + 1
    return coeffs[idx].transpose(0, 2, 1, 3).reshape(N * k, N * r)


def hankel_rank(tf: TransferFunction, N: int, rank_tol=1e-10) -> int:
    """Numerical rank of the N x N block Hankel matrix of Taylor coefficients."""
    sv = scipy.linalg.svdvals(hankel_section(tf, N))
    if sv.size == 0 or sv[0] <= np.finfo(float).eps ** 2:
        return 0
    return int(np.sum(sv > rank_tol * sv[0]))


def toeplitz_R_section(r: Realization, pd: ProblemData, N: int) -> np.ndarray:
    """
    Leading N x N block section of T_R, with blocks R_0 = R0 on the
    diagonal, C A^(d-1) Gamma at offset d = i - j > 0 and their adjoints
    above the diagonal.
    """
    m = r.C.shape[0]
    coeffs = np.zeros((N, m, m), dtype=complex)
    coeffs[0] = pd.R0
    X = np.array(pd.Gamma, dtype=complex)
    for d in range(1, N):
        if X.shape[0] == 0:
            break
        coeffs[d] = r.C @ X
        X = r.A @ X
    upper = np.conj(np.swapaxes(coeffs, 1, 2))
    T = block_toeplitz(coeffs, upper)
    return (T + T.conj().T) / 2


def tail_bound(r: Realization, N: int) -> float:
    """
    Norm of the part of W_obs below the first N block rows,
    sqrt(||A^*N Qo A^N||) with Qo the observability Gramian.
    """
    n = r.A.shape[0]
    if n == 0:
        return 0.0
    Qo = solve_stein_symmetric(r.A.conj().T, r.C.conj().T)
    AN = np.linalg.matrix_power(r.A, N)
    return float(np.sqrt(max(matrix_norm(AN.conj().T @ Qo @ AN), 0.0)))


def select_sections(
    r: Realization,
    pd: ProblemData,
    cert: RiccatiCertificate,
    config: Optional[ConfigManager] = None,
) -> int:
    """
    Number of block rows for the oracle.

    Starts from max(oracle_sections, 8 * ceil(1 / (1 - rho))) with
    rho = max(rho(A), rho(A0)) and doubles N until the section estimate
    W_obs^* T_R^-1 W_obs of Q moves by less than tol_section relative to
    its norm, or sections_max is reached.

    Returns
    -------
    int
    """
    config = config if isinstance(config, ConfigManager) else ConfigManager(config)
    rho = max(spectral_radius(r.A), spectral_radius(cert.A0))
    N = max(config.get("oracle_sections"), config.initial_sections(rho))
    n_max = max(config.get("sections_max"), config.get("oracle_sections"))
    if r.dims.n == 0:
        return N
    tol = config.tolerance("section")
    Q = q_section_estimate(r, pd, N)
    while Q is not None and 2 * N <= n_max:
        Q_next = q_section_estimate(r, pd, 2 * N)
        if Q_next is None:
            break
        change = matrix_norm(Q_next - Q) / (1.0 + matrix_norm(Q_next))
        logger.debug(f"Oracle sections {N} -> {2 * N}: relative change {change:.3e}")
        Q, N = Q_next, 2 * N
        if change < tol:
            break
    logger.info(f"Oracle uses N={N} sections (rho={rho:.4f})")
    return N


@dataclass(frozen=True, eq=False)
class OperatorModelBundle:
    """
    Sections of all operators with N block rows. The fields that need a
    positive definite section M of T_G T_G^* - T_K T_K^* (Xi, Lambda, F,
    DU, DV) are None otherwise; W0 is None without a certificate.
    """

    sections: int
    m: int
    p: int
    q: int
    T_G: np.ndarray
    T_K: np.ndarray
    T_R: np.ndarray
    M: np.ndarray
    W_obs: np.ndarray
    W0: Optional[np.ndarray]
    H_G: np.ndarray
    H_K: np.ndarray
    W_con1: np.ndarray
    W_con2: np.ndarray
    Lambda: Optional[np.ndarray]
    Xi: Optional[np.ndarray]
    F: Optional[np.ndarray]
    DU: Optional[np.ndarray]
    DV: Optional[np.ndarray]

    @property
    def positive(self):
        return self.Xi is not None

    @property
    def G_col(self):
        """T_G E_p, the first block column of T_G."""
        return self.T_G[:, : self.p]

    @property
    def K_col(self):
        """T_K E_q, the first block column of T_K."""
        return self.T_K[:, : self.q]


def _central_parts(T_G, T_K, m, p, q):
    """Xi, DU and DV from sections of T_G and T_K."""
    M = T_G @ T_G.conj().T - T_K @ T_K.conj().T
    M = (M + M.conj().T) / 2
    try:
        cho = scipy.linalg.cho_factor(M, lower=True)
    except np.linalg.LinAlgError as e:
        raise OraclePreconditionError(
            "section of T_G T_G^* - T_K T_K^* is not positive definite"
        ) from e
    K_col = T_K[:, :q]
    Xi = scipy.linalg.cho_solve(cho, K_col)
    DU = T_G[:, :p].conj().T @ Xi
    DV = np.eye(q) + K_col.conj().T @ Xi
    return cho, Xi, DU, (DV + DV.conj().T) / 2


def build_sections(
    r: Realization,
    N: int,
    pd: Optional[ProblemData] = None,
    cert: Optional[RiccatiCertificate] = None,
) -> OperatorModelBundle:
    """
    Build the sections with N block rows of every operator used by the
    oracle.

    Parameters
    ----------
    r : Realization
    N : int
        Number of block rows, at least 1.
    pd : ProblemData, optional
        Computed from r when omitted.
    cert : RiccatiCertificate, optional
        When given, W0 = [C0; C0 A0; ...] is included.

    Returns
    -------
    OperatorModelBundle
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if pd is None:
        pd = compute_problem_data(r)
    m, p, q = r.dims.m, r.dims.p, r.dims.q
    T_G = toeplitz_section(r.G, N, "G").matrix
    T_K = toeplitz_section(r.K, N, "K").matrix
    M = T_G @ T_G.conj().T - T_K @ T_K.conj().T
    M = (M + M.conj().T) / 2
    W0 = None
    if cert is not None:
        W0 = observability_section(cert.C0, cert.A0, N)

    Lambda = Xi = F = DU = DV = None
    try:
        _, Xi, DU, DV = _central_parts(T_G, T_K, m, p, q)
    except OraclePreconditionError:
        logger.info(f"Section N={N} of T_G T_G^* - T_K T_K^* is not positive")
    if Xi is not None:
        GG = T_G @ T_G.conj().T
        Lambda = T_G.conj().T @ scipy.linalg.solve(GG, T_K, assume_a="pos")
        shift = np.eye(N * m, k=m)  # backward shift S_m^*
        DVinv_Kh = np.linalg.solve(DV, T_K[:, :q].conj().T)
        F = shift - shift @ Xi @ DVinv_Kh

    return OperatorModelBundle(
        sections=N,
        m=m,
        p=p,
        q=q,
        T_G=T_G,
        T_K=T_K,
        T_R=toeplitz_R_section(r, pd, N),
        M=M,
        W_obs=observability_section(r.C, r.A, N),
        W0=W0,
        H_G=hankel_section(r.G, N),
        H_K=hankel_section(r.K, N),
        W_con1=controllability_section(r.A, r.B1, N),
        W_con2=controllability_section(r.A, r.B2, N),
        Lambda=Lambda,
        Xi=Xi,
        F=F,
        DU=DU,
        DV=DV,
    )


def positivity_margin(bundle: OperatorModelBundle, N: Optional[int] = None) -> float:
    """
    Smallest eigenvalue of the section with N block rows of
    T_G T_G^* - T_K T_K^* (the whole bundle when N is omitted).
    """
    N = bundle.sections if N is None else N
    if N > bundle.sections:
        raise ValueError(f"bundle has only {bundle.sections} sections, asked for {N}")
    k = N * bundle.m
    return min_eigenvalue(bundle.M[:k, :k])


def _leading(bundle, N):
    N = bundle.sections if N is None else N
    if N > bundle.sections:
        raise ValueError(f"bundle has only {bundle.sections} sections, asked for {N}")
    T_G = bundle.T_G[: N * bundle.m, : N * bundle.p]
    T_K = bundle.T_K[: N * bundle.m, : N * bundle.q]
    return N, T_G, T_K


def central_solution_taylor(
    bundle: OperatorModelBundle, count: int, N: Optional[int] = None
) -> np.ndarray:
    """
    Taylor coefficients of the central solution X = U V^-1 from sections:

        Xi = M^-1 T_K E_q,  U_v = (T_G^* Xi)_v,  V_v = delta_v0 I + (T_K^* Xi)_v,

    with V^-1 obtained by forward substitution on its power series.

    Parameters
    ----------
    bundle : OperatorModelBundle
    count : int
        Number of coefficients, at most N.
    N : int, optional
        Use only the leading N block rows of the bundle.

    Returns
    -------
    numpy.ndarray
        Shape (count, p, q).

    Raises
    ------
    OraclePreconditionError
        If the section of T_G T_G^* - T_K T_K^* is not positive definite.
    """
    N, T_G, T_K = _leading(bundle, N)
    if count > N:
        raise ValueError(f"cannot compute {count} coefficients from {N} sections")
    p, q = bundle.p, bundle.q
    _, Xi, _, _ = _central_parts(T_G, T_K, bundle.m, p, q)
    if count == 0:
        return np.zeros((0, p, q), dtype=complex)
    U = (T_G.conj().T @ Xi).reshape(N, p, q)
    V = (T_K.conj().T @ Xi).reshape(N, q, q)
    V[0] += np.eye(q)

    V0_lu = scipy.linalg.lu_factor(V[0])
    Vinv = np.zeros((count, q, q), dtype=complex)
    Vinv[0] = scipy.linalg.lu_solve(V0_lu, np.eye(q))
    for v in range(1, count):
        acc = sum(V[j] @ Vinv[v - j] for j in range(1, v + 1))
        Vinv[v] = -scipy.linalg.lu_solve(V0_lu, acc)

    X = np.zeros((count, p, q), dtype=complex)
    for v in range(count):
        X[v] = sum(U[j] @ Vinv[v - j] for j in range(v + 1))
    return X


def realization_taylor(bundle: OperatorModelBundle, count: int) -> np.ndarray:
    """
    Taylor coefficients of X from the operator realization

        X(z) = DU DV^-1 + z (E_p^* T_G^* - DU DV^-1 E_q^* T_K^*)
               (I - zF)^-1 S^* Xi DV^-1

    on sections, with F = S^* - S^* Xi DV^-1 E_q^* T_K^*.

    Returns
    -------
    numpy.ndarray
        Shape (count, p, q).
    """
    if not bundle.positive:
        raise OraclePreconditionError(
            "section of T_G T_G^* - T_K T_K^* is not positive definite"
        )
    p, q, m = bundle.p, bundle.q, bundle.m
    X0 = np.linalg.solve(bundle.DV.T, bundle.DU.T).T
    row = bundle.G_col.conj().T - X0 @ bundle.K_col.conj().T
    shift = np.eye(bundle.sections * m, k=m)
    vec = np.linalg.solve(bundle.DV.T, (shift @ bundle.Xi).T).T
    X = np.zeros((count, p, q), dtype=complex)
    if count == 0:
        return X
    X[0] = X0
    for v in range(1, count):
        X[v] = row @ vec
        vec = bundle.F @ vec
    return X


def section_spectral_radius(bundle: OperatorModelBundle) -> float:
    """Spectral radius of the section of F."""
    if not bundle.positive:
        raise OraclePreconditionError(
            "section of T_G T_G^* - T_K T_K^* is not positive definite"
        )
    return spectral_radius(bundle.F)


def section_entropy(bundle: OperatorModelBundle) -> float:
    """
    -ln det[I + E_q^* T_K^* M^-1 T_K E_q] on the section, which equals
    -ln det[E_q^* (I - Lambda^* Lambda)^-1 E_q].
    """
    if not bundle.positive:
        raise OraclePreconditionError(
            "section of T_G T_G^* - T_K T_K^* is not positive definite"
        )
    L = np.linalg.cholesky(bundle.DV)
    return float(-2.0 * np.sum(np.log(np.real(np.diag(L)))))


def lambda_entropy(bundle: OperatorModelBundle) -> float:
    """-ln det of the leading q x q block of (I - Lambda^* Lambda)^-1."""
    if not bundle.positive:
        raise OraclePreconditionError(
            "section of T_G T_G^* - T_K T_K^* is not positive definite"
        )
    q = bundle.q
    I = np.eye(bundle.Lambda.shape[1])
    E = np.zeros((bundle.Lambda.shape[1], q))
    E[:q, :q] = np.eye(q)
    block = E.T @ np.linalg.solve(I - bundle.Lambda.conj().T @ bundle.Lambda, E)
    sign, logdet = np.linalg.slogdet(block)
    return float(-logdet)


@dataclass(frozen=True)
class InversionResiduals:
    """
    Residuals of the operator identities on one set of sections.

    - trp1p2: M - T_R - W_obs (P2 - P1) W_obs^*
    - inverse_formula: M^-1 - T_R^-1 - W0 Omega W0^*
    - w0_recovery: T_R^-1 W_obs - W0
    - q_recovery: W_obs^* T_R^-1 W_obs - Q
    - lambda_norm: largest singular value of Lambda
    - lambda_inverse: (I - Lambda^* Lambda)^-1 - I - T_K^* M^-1 T_K
    - lambda_product: Lambda (I - Lambda^* Lambda)^-1 - T_G^* M^-1 T_K
    - scale: 1 + ||T_R^-1||
    """

    trp1p2: float
    inverse_formula: float
    w0_recovery: float
    q_recovery: float
    lambda_norm: float
    lambda_inverse: float
    lambda_product: float
    scale: float

    def as_dict(self):
        return dict(self.__dict__)


def check_inversion_identities(
    bundle: OperatorModelBundle,
    pd: ProblemData,
    cert: RiccatiCertificate,
) -> InversionResiduals:
    """
    Evaluate the operator identities that link the sections to the
    Riccati certificate. Nothing is raised; residuals are reported and
    become inf when a section cannot be inverted.
    """
    T_R = bundle.T_R
    W = bundle.W_obs
    W0 = bundle.W0
    if W0 is None:
        W0 = observability_section(cert.C0, cert.A0, bundle.sections)
    Q = cert.Q
    omega, _ = compute_omega(pd, Q)
    inf = float("inf")

    trp1p2 = matrix_norm(bundle.M - T_R - W @ pd.N @ W.conj().T)

    try:
        cho_R = scipy.linalg.cho_factor(T_R, lower=True)
        TRinv_W = scipy.linalg.cho_solve(cho_R, W)
        w0_recovery = matrix_norm(TRinv_W - W0)
        q_recovery = matrix_norm(W.conj().T @ TRinv_W - Q)
        scale = 1.0 + 1.0 / min_eigenvalue(T_R)
        TRinv = scipy.linalg.cho_solve(cho_R, np.eye(T_R.shape[0], dtype=complex))
    except np.linalg.LinAlgError:
        logger.warning("Section of T_R is not positive definite")
        return InversionResiduals(trp1p2, inf, inf, inf, inf, inf, inf, inf)

    lambda_norm = inf
    inverse_formula = lambda_inverse = lambda_product = inf
    if bundle.positive:
        Minv = np.linalg.inv(bundle.M)
        inverse_formula = matrix_norm(Minv - TRinv - W0 @ omega @ W0.conj().T)
        Lam = bundle.Lambda
        lambda_norm = matrix_norm(Lam)
        I = np.eye(Lam.shape[1])
        inv = np.linalg.inv(I - Lam.conj().T @ Lam)
        lambda_inverse = matrix_norm(
            inv - I - bundle.T_K.conj().T @ Minv @ bundle.T_K
        )
        lambda_product = matrix_norm(
            Lam @ inv - bundle.T_G.conj().T @ Minv @ bundle.T_K
        )

    return InversionResiduals(
        trp1p2=trp1p2,
        inverse_formula=inverse_formula,
        w0_recovery=w0_recovery,
        q_recovery=q_recovery,
        lambda_norm=lambda_norm,
        lambda_inverse=lambda_inverse,
        lambda_product=lambda_product,
        scale=scale,
    )
