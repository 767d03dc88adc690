"""
State-space realizations of stable rational matrix functions.

A pair of functions G (m x p) and K (m x q) is given by one joint
realization

    [G(z) K(z)] = [D1 D2] + z C (I - zA)^-1 [B1 B2],

and every other function produced by the solver (X, U, V, V^-1, Theta) is
carried as a TransferFunction D + z C (I - zA)^-1 B. Scalars are complex
throughout; real input is embedded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
import scipy.linalg

from . import logging_config

logger = logging_config.logger

# Condition number above which I - zA is treated as singular
SINGULAR_CONDITION = 1e14

# Distance from the unit circle accepted by eval_R
CIRCLE_TOLERANCE = 1e-9


class RealizationError(ValueError):
    """Raised when the matrices of a realization have inconsistent sizes."""


class DomainError(ValueError):
    """Raised when a function is evaluated outside its domain."""


class NumericalError(RuntimeError):
    """Base class for failures of the underlying linear algebra."""


class SingularityError(NumericalError):
    """Raised when a matrix that must be inverted is numerically singular."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


def as_matrix(value, name="matrix"):
    """
    Coerce a value to a read-only complex 2-D array.

    Scalars become 1 x 1 matrices. One-dimensional input is rejected
    because its orientation is ambiguous.
    """
    arr = np.array(value, dtype=complex)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise RealizationError(
            f"{name} must be a 2-D matrix, got an array with shape {arr.shape}"
        )
    arr.setflags(write=False)
    return arr


def matrix_norm(M):
    """Spectral norm, zero for empty matrices."""
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def spectral_radius(Msq):
    """
    Largest eigenvalue modulus of a square matrix.

    Parameters
    ----------
    Msq : array_like
        Square matrix; an empty matrix has spectral radius 0.

    Returns
    -------
    float

    Raises
    ------
    NumericalError
        If the eigenvalue solver does not converge.
    """
    Msq = np.asarray(Msq)
    if Msq.ndim != 2 or Msq.shape[0] != Msq.shape[1]:
        raise RealizationError(f"expected a square matrix, got shape {Msq.shape}")
    if Msq.shape[0] == 0:
        return 0.0
    try:
        eigenvalues = scipy.linalg.eigvals(Msq)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"eigenvalue computation failed: {e}") from e
    return float(np.max(np.abs(eigenvalues)))


def min_eigenvalue(H):
    """Smallest eigenvalue of the Hermitian part of H, +inf when empty."""
    H = np.asarray(H)
    if H.size == 0:
        return float("inf")
    try:
        return float(scipy.linalg.eigvalsh((H + H.conj().T) / 2)[0])
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"eigenvalue computation failed: {e}") from e


def is_strictly_positive(H, tol):
    """True when min eig(H) > tol * (1 + ||H||)."""
    return min_eigenvalue(H) > tol * (1.0 + matrix_norm(H))


def circle_points(count):
    """Uniform grid of `count` points e^{i w}, w in [0, 2 pi)."""
    omega = 2 * np.pi * np.arange(count) / count
    return omega, np.exp(1j * omega)


@dataclass(frozen=True)
class Dimensions:
    """Sizes (n, m, p, q) of a joint realization of [G K]."""

    n: int
    m: int
    p: int
    q: int

    def __post_init__(self):
        for name in ("n", "m", "p", "q"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 0:
                raise RealizationError(f"{name} must be a nonnegative integer")
        for name in ("m", "p", "q"):
            if getattr(self, name) < 1:
                raise RealizationError(f"{name} must be at least 1")

    def as_tuple(self):
        return (int(self.n), int(self.m), int(self.p), int(self.q))


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """
    The function D + z C (I - zA)^-1 B.

    Parameters
    ----------
    D : k x r matrix
    C : k x n matrix
    A : n x n matrix
    B : n x r matrix
    """

    D: np.ndarray
    C: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        for name in ("D", "C", "A", "B"):
            object.__setattr__(self, name, as_matrix(getattr(self, name), name))
        k, r = self.D.shape
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise RealizationError(f"A must be square, got shape {self.A.shape}")
        if self.C.shape != (k, n):
            raise RealizationError(f"C must have shape {(k, n)}, got {self.C.shape}")
        if self.B.shape != (n, r):
            raise RealizationError(f"B must have shape {(n, r)}, got {self.B.shape}")

    @classmethod
    def constant(cls, D):
        D = as_matrix(D, "D")
        k, r = D.shape
        return cls(D, np.zeros((k, 0)), np.zeros((0, 0)), np.zeros((0, r)))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def shape(self):
        return self.D.shape

    def __call__(self, z):
        return eval_transfer(self, z)

    def taylor(self, count):
        """
        First `count` Taylor coefficients F_0 = D, F_v = C A^(v-1) B.

        Returns
        -------
        numpy.ndarray
            Array of shape (count, k, r).
        """
        k, r = self.shape
        coeffs = np.zeros((count, k, r), dtype=complex)
        if count == 0:
            return coeffs
        coeffs[0] = self.D
        if self.n == 0:
            return coeffs
        X = np.array(self.B)
        for v in range(1, count):
            coeffs[v] = self.C @ X
            X = self.A @ X
        return coeffs

    def similarity(self, T):
        """The same function realized in the state coordinates x = T x'."""
        T = np.asarray(T, dtype=complex)
        Tinv = np.linalg.inv(T)
        return TransferFunction(self.D, self.C @ T, Tinv @ self.A @ T, Tinv @ self.B)

    def to_dict(self):
        return {"D": self.D, "C": self.C, "A": self.A, "B": self.B}


@dataclass(frozen=True, eq=False)
class Realization:
    """
    Joint realization (A, B1, B2, C, D1, D2) of [G K], where

        G(z) = D1 + z C (I - zA)^-1 B1,
        K(z) = D2 + z C (I - zA)^-1 B2.
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    metadata: dict = field(default_factory=dict)

    matrix_names = ("A", "B1", "B2", "C", "D1", "D2")

    def __post_init__(self):
        for name in self.matrix_names:
            object.__setattr__(self, name, as_matrix(getattr(self, name), name))
        check_dimensions(self)

    @classmethod
    def constant(cls, D1, D2, metadata=None):
        """Realization with n = 0, i.e. constant G = D1 and K = D2."""
        D1 = as_matrix(D1, "D1")
        D2 = as_matrix(D2, "D2")
        m, p = D1.shape
        q = D2.shape[1]
        return cls(
            A=np.zeros((0, 0)),
            B1=np.zeros((0, p)),
            B2=np.zeros((0, q)),
            C=np.zeros((m, 0)),
            D1=D1,
            D2=D2,
            metadata=dict(metadata or {}),
        )

    @property
    def dims(self):
        return Dimensions(
            n=self.A.shape[0], m=self.C.shape[0], p=self.B1.shape[1], q=self.B2.shape[1]
        )

    @property
    def G(self):
        return TransferFunction(self.D1, self.C, self.A, self.B1)

    @property
    def K(self):
        return TransferFunction(self.D2, self.C, self.A, self.B2)

    @property
    def joint(self):
        """The transfer function [G K]."""
        return TransferFunction(
            np.hstack([self.D1, self.D2]), self.C, self.A, np.hstack([self.B1, self.B2])
        )

    def matrices(self):
        return {name: getattr(self, name) for name in self.matrix_names}

    def scale(self):
        """1 + the largest spectral norm among the realization matrices."""
        return 1.0 + max(matrix_norm(M) for M in self.matrices().values())


def check_dimensions(r):
    """
    Raise RealizationError unless the matrices of `r` fit together.
    """
    n = r.A.shape[0]
    if r.A.shape != (n, n):
        raise RealizationError(f"A must be square, got shape {r.A.shape}")
    m = r.C.shape[0]
    if r.C.shape[1] != n:
        raise RealizationError(f"C must have {n} columns, got shape {r.C.shape}")
    p = r.D1.shape[1]
    q = r.D2.shape[1]
    expected = {"B1": (n, p), "B2": (n, q), "D1": (m, p), "D2": (m, q)}
    for name, shape in expected.items():
        actual = getattr(r, name).shape
        if actual != shape:
            raise RealizationError(f"{name} must have shape {shape}, got {actual}")
    if m < 1 or p < 1 or q < 1:
        raise RealizationError("m, p and q must all be at least 1")


@dataclass(frozen=True)
class Violation:
    """A reason why a dimensionally consistent realization is not valid."""

    kind: str
    value: float
    message: str

    def __str__(self):
        return self.message


def observability_matrix(C, A, blocks=None):
    """Stack [C; CA; ...; CA^(blocks-1)], with blocks defaulting to n."""
    C = np.asarray(C)
    A = np.asarray(A)
    n = A.shape[0]
    if blocks is None:
        blocks = n
    rows = []
    X = np.array(C, dtype=complex)
    for _ in range(blocks):
        rows.append(X)
        X = X @ A
    if not rows:
        return np.zeros((0, n), dtype=complex)
    return np.vstack(rows)


def observability_rank(C, A, tolerance_factor=64.0):
    """
    Numerical rank of the observability matrix, with tolerance
    n * ||O|| * eps * tolerance_factor.
    """
    n = np.asarray(A).shape[0]
    if n == 0:
        return 0
    O = observability_matrix(C, A)
    sv = scipy.linalg.svdvals(O)
    if sv.size == 0 or sv[0] == 0:
        return 0
    tol = n * sv[0] * np.finfo(float).eps * tolerance_factor
    return int(np.sum(sv > tol))


def validate_realization(r: Realization, tolerance_factor=64.0) -> List[Violation]:
    """
    Check stability of A and observability of (C, A).

    Parameters
    ----------
    r : Realization
    tolerance_factor : float
        Factor of the observability rank tolerance.

    Returns
    -------
    list of Violation
        Empty if the realization is valid.

    Raises
    ------
    RealizationError
        If the matrix sizes are inconsistent.
    """
    check_dimensions(r)
    violations = []
    n = r.A.shape[0]
    rho = spectral_radius(r.A)
    if rho >= 1:
        violations.append(
            Violation(
                "stability",
                rho,
                f"A is not stable: spectral radius {rho!r} >= 1",
            )
        )
    rank = observability_rank(r.C, r.A, tolerance_factor)
    if rank < n:
        violations.append(
            Violation(
                "observability",
                float(rank),
                f"(C, A) is not observable: observability matrix has rank "
                f"{rank} < {n}",
            )
        )
    return violations


def eval_transfer(tf: TransferFunction, z: complex) -> np.ndarray:
    """
    Evaluate D + z C (I - zA)^-1 B at a point.

    Raises
    ------
    SingularityError
        If I - zA is numerically singular.
    """
    if tf.n == 0:
        return np.array(tf.D)
    M = np.eye(tf.n) - z * tf.A
    condition = np.linalg.cond(M)
    if not np.isfinite(condition) or condition > SINGULAR_CONDITION:
        raise SingularityError(
            f"I - zA is singular at z={z!r} (condition estimate {condition:.3e})",
            condition=condition,
        )
    return tf.D + z * (tf.C @ np.linalg.solve(M, tf.B))


def eval_transfer_grid(tf: TransferFunction, zs: Sequence[complex]) -> np.ndarray:
    """
    Evaluate a transfer function at many points.

    Returns
    -------
    numpy.ndarray
        Array of shape (len(zs), k, r).
    """
    zs = np.asarray(zs, dtype=complex).ravel()
    k, r = tf.shape
    values = np.broadcast_to(tf.D, (zs.size, k, r)).copy()
    if tf.n == 0 or zs.size == 0:
        return values
    M = np.eye(tf.n)[None, :, :] - zs[:, None, None] * tf.A[None, :, :]
    try:
        X = np.linalg.solve(M, np.broadcast_to(tf.B, (zs.size,) + tf.B.shape))
    except np.linalg.LinAlgError as e:
        raise SingularityError(f"I - zA is singular on the grid: {e}") from e
    return values + zs[:, None, None] * (tf.C[None, :, :] @ X)


def eval_R(r: Realization, pd, z: complex) -> np.ndarray:
    """
    Evaluate R(z) = z C (I - zA)^-1 Gamma + R0 + Gamma^* (zI - A^*)^-1 C^*
    on the unit circle, where R = G G^* - K K^*.

    Parameters
    ----------
    r : Realization
    pd : ProblemData
        Provides R0 and Gamma.
    z : complex
        A point with |z| = 1.

    Raises
    ------
    DomainError
        If z is not on the unit circle.
    """
    if abs(abs(z) - 1.0) > CIRCLE_TOLERANCE:
        raise DomainError(f"R is evaluated on the unit circle only, got |z|={abs(z)}")
    return eval_R_grid(r, pd, [z])[0]


def eval_R_grid(r: Realization, pd, zs: Sequence[complex]) -> np.ndarray:
    """R at many circle points, shape (len(zs), m, m)."""
    zs = np.asarray(zs, dtype=complex).ravel()
    m = r.C.shape[0]
    values = np.broadcast_to(pd.R0, (zs.size, m, m)).astype(complex)
    n = r.A.shape[0]
    if n == 0:
        return values
    half = eval_transfer_grid(
        TransferFunction(np.zeros((m, m)), r.C, r.A, pd.Gamma), zs
    )
    # Gamma^* (zI - A^*)^-1 C^* on the circle
    I = np.eye(n)
    M = zs[:, None, None] * I[None] - r.A.conj().T[None]
    right = np.linalg.solve(M, np.broadcast_to(r.C.conj().T, (zs.size, n, m)))
    return values + half + pd.Gamma.conj().T[None] @ right


def mcmillan_degree_estimate(tf: TransferFunction, rank_tol=1e-10) -> int:
    """
    Estimate the McMillan degree of a stable transfer function as the
    numerical rank of the product of its controllability and observability
    Gramians.

    Parameters
    ----------
    tf : TransferFunction
        Stable realization.
    rank_tol : float
        Singular values below rank_tol times the largest one are dropped.

    Returns
    -------
    int
    """
    from .MatrixEquations import solve_stein_symmetric

    if tf.n == 0:
        return 0
    P = solve_stein_symmetric(tf.A, tf.B)
    Qo = solve_stein_symmetric(tf.A.conj().T, tf.C.conj().T)
    sv = scipy.linalg.svdvals(P @ Qo)
    if sv[0] <= np.finfo(float).eps ** 2:
        return 0
    return int(np.sum(sv > rank_tol * sv[0]))
