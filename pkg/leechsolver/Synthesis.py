"""
Closed-form synthesis of the maximum entropy solution.

From a realization, its problem data and a Riccati certificate this module
computes Omega and the matrices C1, C2, D0, B0, DU, DV, A^x, and assembles
realizations of X, U, V, V^-1 and the outer spectral factor Theta of
I - X^*X, together with the entropy -ln det DV.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from . import logging_config
from .MatrixEquations import ProblemData, RiccatiCertificate, compute_omega
from .Realization import (
    NumericalError,
    Realization,
    TransferFunction,
    circle_points,
    eval_transfer_grid,
    matrix_norm,
)

logger = logging_config.logger

# Relative disagreement of the two forms of B0 that is logged as a warning
B0_TOLERANCE = 1e-10


class InconsistencyError(NumericalError):
    """Raised when D_V is not positive definite under a valid certificate."""


class MetricViolationError(ValueError):
    """Raised when I - X^*X is not positive definite on the circle grid."""


@dataclass(frozen=True, eq=False)
class SolutionBundle:
    """
    Everything the synthesis produces. X, U, V, Vinv and Theta are
    TransferFunction realizations; entropy is -ln det DV.
    """

    Omega: np.ndarray
    Omega0: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D0: np.ndarray
    B0: np.ndarray
    DU: np.ndarray
    DV: np.ndarray
    Across: np.ndarray
    X: TransferFunction
    U: TransferFunction
    V: TransferFunction
    Vinv: TransferFunction
    Theta: TransferFunction
    entropy: float
    omega_discrepancy: float = 0.0
    b0_discrepancy: float = 0.0


def _h(M):
    """Conjugate transpose, also of stacks of matrices."""
    return np.conj(np.swapaxes(M, -1, -2))


def _logdet_pd(H):
    L = np.linalg.cholesky(H)
    return float(2.0 * np.sum(np.log(np.real(np.diag(L)))))


def _inverse_sqrt(H):
    w, U = scipy.linalg.eigh(H)
    return (U * (1.0 / np.sqrt(w))) @ U.conj().T


def synthesize(
    r: Realization, pd: ProblemData, cert: RiccatiCertificate
) -> SolutionBundle:
    """
    Build the maximum entropy solution from a valid certificate.

    Parameters
    ----------
    r : Realization
    pd : ProblemData
    cert : RiccatiCertificate
        Must satisfy both conditions of strict positivity.

    Returns
    -------
    SolutionBundle

    Raises
    ------
    InconsistencyError
        If DV is not positive definite.
    """
    n, q = r.dims.n, r.dims.q
    Q, C0, A0 = cert.Q, cert.C0, cert.A0
    A, B1, B2, D1, D2 = r.A, r.B1, r.B2, r.D1, r.D2
    Gamma = pd.Gamma

    omega, omega_discrepancy = compute_omega(pd, Q)
    Omega0 = np.eye(n) + pd.N @ Q

    C1 = _h(D1) @ C0 + _h(B1) @ Q @ A0
    C2 = _h(D2) @ C0 + _h(B2) @ Q @ A0

    try:
        delta_cho = scipy.linalg.cho_factor(cert.Delta, lower=True)
    except np.linalg.LinAlgError as e:
        raise InconsistencyError("Delta is not positive definite") from e
    Y = scipy.linalg.cho_solve(delta_cho, D2 - _h(Gamma) @ Q @ B2)

    D0 = Y + C0 @ omega @ _h(C2)
    B0 = B2 - Gamma @ Y + A0 @ omega @ _h(C2)
    B0_alt = B2 - Gamma @ D0 + A @ omega @ _h(C2)
    b0_discrepancy = matrix_norm(B0 - B0_alt)
    if b0_discrepancy > B0_TOLERANCE * (1.0 + matrix_norm(B0)):
        logger.warning(
            f"The two forms of B0 disagree by {b0_discrepancy:.3e}; "
            "the certificate may be inaccurate"
        )

    DU = _h(D1) @ D0 + _h(B1) @ Q @ B0
    DV = np.eye(q) + _h(D2) @ D0 + _h(B2) @ Q @ B0
    DV = (DV + _h(DV)) / 2
    try:
        dv_cho = scipy.linalg.cho_factor(DV, lower=True)
    except np.linalg.LinAlgError as e:
        raise InconsistencyError(
            "D_V is not positive definite; the certificate or tolerances broke down"
        ) from e
    DVinv = scipy.linalg.cho_solve(dv_cho, np.eye(q, dtype=complex))

    Across = A0 - B0 @ DVinv @ C2
    X0 = DU @ DVinv
    B_out = B0 @ DVinv
    X = TransferFunction(X0, C1 - X0 @ C2, Across, B_out)
    U = TransferFunction(DU, C1, A0, B0)
    V = TransferFunction(DV, C2, A0, B0)
    Vinv = TransferFunction(DVinv, -DVinv @ C2, Across, B_out)
    DV_inv_half = _inverse_sqrt(DV)
    Theta = TransferFunction(DV_inv_half, -DV_inv_half @ C2, Across, B_out)

    entropy = -_logdet_pd(DV)
    logger.info(f"Maximum entropy solution synthesized: entropy {entropy:.12g}")

    return SolutionBundle(
        Omega=omega,
        Omega0=Omega0,
        C1=C1,
        C2=C2,
        D0=D0,
        B0=B0,
        DU=DU,
        DV=DV,
        Across=Across,
        X=X,
        U=U,
        V=V,
        Vinv=Vinv,
        Theta=Theta,
        entropy=entropy,
        omega_discrepancy=omega_discrepancy,
        b0_discrepancy=b0_discrepancy,
    )


def entropy_integral(X: TransferFunction, grid_points: int = 4096) -> float:
    """
    Trapezoidal approximation of (1 / 2 pi) int ln det[I - X^*X] dw on a
    uniform grid.

    Raises
    ------
    MetricViolationError
        If I - X^*X is not positive definite at some grid point.
    """
    omega, zs = circle_points(grid_points)
    values = eval_transfer_grid(X, zs)
    q = X.shape[1]
    defect = np.eye(q)[None] - _h(values) @ values
    defect = (defect + _h(defect)) / 2
    try:
        L = np.linalg.cholesky(defect)
    except np.linalg.LinAlgError:
        smallest = np.linalg.eigvalsh(defect)[:, 0]
        k = int(np.argmin(smallest))
        raise MetricViolationError(
            f"I - X^*X is not positive definite at w={omega[k]:.6f} "
            f"(min eigenvalue {smallest[k]:.3e})"
        )
    diag = np.real(np.diagonal(L, axis1=1, axis2=2))
    return float(np.mean(2.0 * np.sum(np.log(diag), axis=1)))


@dataclass(frozen=True)
class SupNormEstimate:
    """
    Lower bound for the H-infinity norm: the largest value found on a
    uniform grid, improved by a bounded scalar search (golden section
    with parabolic steps) around the grid maxima.
    """

    value: float
    omega: float
    grid_points: int
    refined: bool

    def __float__(self):
        return float(self.value)


def _norm_at(tf, w):
    return float(np.linalg.norm(eval_transfer_grid(tf, [np.exp(1j * w)])[0], 2))


def supnorm_estimate(
    tf: TransferFunction,
    grid_points: int = 512,
    refine_depth: int = 60,
    candidates: int = 4,
) -> SupNormEstimate:
    """
    Estimate max |tf(e^{iw})| over the circle.

    Parameters
    ----------
    tf : TransferFunction
        Stable realization.
    grid_points : int
        Size of the uniform grid.
    refine_depth : int
        Iteration limit of each bounded search.
    candidates : int
        Number of grid maxima to refine.

    Returns
    -------
    SupNormEstimate
    """
    omega, zs = circle_points(grid_points)
    norms = np.linalg.norm(eval_transfer_grid(tf, zs), ord=2, axis=(1, 2))
    best = int(np.argmax(norms))
    value, where, refined = float(norms[best]), float(omega[best]), False
    if tf.n == 0 or refine_depth < 1:
        return SupNormEstimate(value, where, grid_points, refined)

    step = 2 * np.pi / grid_points
    peaks = [
        k
        for k in range(grid_points)
        if norms[k] >= norms[k - 1] and norms[k] >= norms[(k + 1) % grid_points]
    ]
    peaks = sorted(peaks, key=lambda k: -norms[k])[:candidates]
    for k in peaks:
        res = scipy.optimize.minimize_scalar(
            lambda w: -_norm_at(tf, w),
            bounds=(omega[k] - step, omega[k] + step),
            method="bounded",
            options={"maxiter": refine_depth, "xatol": 1e-12},
        )
        if -res.fun > value:
            value, where, refined = float(-res.fun), float(res.x % (2 * np.pi)), True
    return SupNormEstimate(value, where, grid_points, refined)


def interpolation_residual(r: Realization, X: TransferFunction, grid_points=512):
    """max over the grid of |G X - K|."""
    _, zs = circle_points(grid_points)
    G = eval_transfer_grid(r.G, zs)
    K = eval_transfer_grid(r.K, zs)
    diff = G @ eval_transfer_grid(X, zs) - K
    return float(np.max(np.linalg.norm(diff, 2, axis=(1, 2))))


def factor_residual(
    r: Realization, U: TransferFunction, V: TransferFunction, grid_points=512
):
    """max over the grid of |G U - K V|."""
    _, zs = circle_points(grid_points)
    G = eval_transfer_grid(r.G, zs)
    K = eval_transfer_grid(r.K, zs)
    diff = G @ eval_transfer_grid(U, zs) - K @ eval_transfer_grid(V, zs)
    return float(np.max(np.linalg.norm(diff, 2, axis=(1, 2))))


def spectral_factor_residual(
    X: TransferFunction, Theta: TransferFunction, grid_points=512
):
    """max over the grid of |I - X^*X - Theta^*Theta|."""
    _, zs = circle_points(grid_points)
    Xv = eval_transfer_grid(X, zs)
    Tv = eval_transfer_grid(Theta, zs)
    q = X.shape[1]
    diff = np.eye(q)[None] - _h(Xv) @ Xv - _h(Tv) @ Tv
    return float(np.max(np.linalg.norm(diff, 2, axis=(1, 2))))


def circle_sweep(
    r: Realization, X: TransferFunction, grid_points: int = 512
) -> dict:
    """
    Columns of a sweep of X over the circle: w, |X|, min eig(I - X^*X)
    and |G X - K| at each grid point.
    """
    omega, zs = circle_points(grid_points)
    Xv = eval_transfer_grid(X, zs)
    G = eval_transfer_grid(r.G, zs)
    K = eval_transfer_grid(r.K, zs)
    q = X.shape[1]
    defect = np.eye(q)[None] - _h(Xv) @ Xv
    defect = (defect + _h(defect)) / 2
    return {
        "omega": omega,
        "norm_X": np.linalg.norm(Xv, 2, axis=(1, 2)),
        "min_eig": np.linalg.eigvalsh(defect)[:, 0],
        "interp_residual": np.linalg.norm(G @ Xv - K, 2, axis=(1, 2)),
    }
