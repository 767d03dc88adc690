"""
Problem and solution files, and random instances that are strictly
positive by construction.

A problem file is JSON of the form

    {
        "schema": "leechsolver.problem",
        "version": 1,
        "dimensions": {"n": 2, "m": 1, "p": 1, "q": 1},
        "matrices": {
            "A": {"shape": [2, 2], "data": [[re, im], ...]},
            ...
        },
        "metadata": {"seed": 7, "description": "..."}
    }

with every matrix stored row-major as [re, im] pairs. Numbers are written
with the shortest decimal that round-trips, so save -> load -> save is
byte-stable.
"""

from __future__ import annotations

import json
import math
import warnings

import numpy as np
import scipy.signal

from . import logging_config
from .ConfigManager import ConfigManager
from .Realization import (
    Dimensions,
    Realization,
    RealizationError,
    TransferFunction,
    spectral_radius,
    validate_realization,
)
from .Synthesis import supnorm_estimate

logger = logging_config.logger

PROBLEM_SCHEMA = "leechsolver.problem"
SOLUTION_SCHEMA = "leechsolver.solution"
SCHEMA_VERSION = 1
SOLUTION_FUNCTIONS = ("X", "U", "V", "Vinv", "Theta")


class ProblemFileError(ValueError):
    """
    Raised when a problem or solution file cannot be parsed or describes
    an invalid realization. `location` names the line and column or the
    field where the problem was found.
    """

    def __init__(self, message, location=None):
        self.location = location
        self.detail = message
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class GenerationError(RuntimeError):
    """Raised when the instance generator runs out of retries."""


def encode_matrix(M):
    """A matrix as {"shape": [rows, cols], "data": [[re, im], ...]}."""
    M = np.asarray(M, dtype=complex)
    return {
        "shape": [int(s) for s in M.shape],
        "data": [[float(v.real), float(v.imag)] for v in M.reshape(-1)],
    }


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def decode_matrix(obj, where="matrix"):
    """
    Inverse of encode_matrix.

    Raises
    ------
    ProblemFileError
        If the shape or any entry is malformed.
    """
    if not isinstance(obj, dict) or "shape" not in obj or "data" not in obj:
        raise ProblemFileError("expected an object with 'shape' and 'data'", where)
    shape = obj["shape"]
    if (
        not isinstance(shape, list)
        or len(shape) != 2
        or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0
                   for s in shape)
    ):
        raise ProblemFileError(f"malformed shape {shape!r}", f"{where}.shape")
    data = obj["data"]
    rows, cols = shape
    if not isinstance(data, list) or len(data) != rows * cols:
        count = len(data) if isinstance(data, list) else "no"
        raise ProblemFileError(
            f"expected {rows * cols} entries for shape {shape}, got {count}",
            f"{where}.data",
        )
    values = np.empty(rows * cols, dtype=complex)
    for i, entry in enumerate(data):
        if (
            not isinstance(entry, list)
            or len(entry) != 2
            or not all(_is_number(v) and math.isfinite(v) for v in entry)
        ):
            raise ProblemFileError(
                f"malformed number {entry!r}, expected [re, im]",
                f"{where}.data[{i}]",
            )
        values[i] = complex(entry[0], entry[1])
    return values.reshape(rows, cols)


def problem_to_dict(r: Realization) -> dict:
    n, m, p, q = r.dims.as_tuple()
    return {
        "schema": PROBLEM_SCHEMA,
        "version": SCHEMA_VERSION,
        "dimensions": {"n": n, "m": m, "p": p, "q": q},
        "matrices": {name: encode_matrix(M) for name, M in r.matrices().items()},
        "metadata": dict(r.metadata),
    }


def _check_header(data, schema):
    if not isinstance(data, dict):
        raise ProblemFileError("top level must be an object", "$")
    if data.get("schema") != schema:
        raise ProblemFileError(
            f"expected schema {schema!r}, got {data.get('schema')!r}", "schema"
        )
    if data.get("version") != SCHEMA_VERSION:
        raise ProblemFileError(
            f"unsupported version {data.get('version')!r}", "version"
        )


def problem_from_dict(data) -> Realization:
    """
    Build a Realization from a parsed problem file without checking
    stability or observability.
    """
    _check_header(data, PROBLEM_SCHEMA)
    matrices = data.get("matrices")
    if not isinstance(matrices, dict):
        raise ProblemFileError("missing 'matrices' object", "matrices")
    decoded = {}
    for name in Realization.matrix_names:
        if name not in matrices:
            raise ProblemFileError("missing matrix", f"matrices.{name}")
        decoded[name] = decode_matrix(matrices[name], f"matrices.{name}")
    metadata = data.get("metadata", {})
    if not isinstance(metadata, dict):
        raise ProblemFileError("must be an object", "metadata")
    try:
        r = Realization(**decoded, metadata=metadata)
    except RealizationError as e:
        raise ProblemFileError(str(e), "matrices") from e
    dims = data.get("dimensions")
    if dims is not None:
        expected = dict(zip("nmpq", r.dims.as_tuple()))
        if dims != expected:
            raise ProblemFileError(
                f"declared {dims} but the matrices have {expected}", "dimensions"
            )
    return r


def _parse_json(text, source):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ProblemFileError(
            e.msg, f"{source}: line {e.lineno}, column {e.colno}"
        ) from e


def read_problem(path) -> Realization:
    """Parse a problem file; the realization is not validated."""
    with open(path, "r") as f:
        text = f.read()
    try:
        return problem_from_dict(_parse_json(text, path))
    except ProblemFileError as e:
        if e.location and e.location.startswith(str(path)):
            raise
        raise ProblemFileError(e.detail, f"{path}: {e.location}") from e


def load_problem(path, tolerance_factor=64.0) -> Realization:
    """
    Read and validate a problem file.

    Parameters
    ----------
    path : str
        The problem file.
    tolerance_factor : float
        Factor of the observability rank tolerance.

    Returns
    -------
    Realization

    Raises
    ------
    ProblemFileError
        For malformed JSON or numbers, inconsistent dimensions, an unstable
        A (naming the offending eigenvalue) or an unobservable (C, A).
    """
    r = read_problem(path)
    violations = validate_realization(r, tolerance_factor)
    if violations:
        messages = []
        for v in violations:
            if v.kind == "stability":
                eigs = np.linalg.eigvals(r.A)
                worst = eigs[np.argmax(np.abs(eigs))]
                messages.append(
                    f"A has eigenvalue {worst:.6g} with modulus "
                    f"{abs(worst):.6g} >= 1"
                )
            else:
                messages.append(str(v))
        raise ProblemFileError("; ".join(messages), f"{path}: matrices")
    logger.info(f"Loaded problem {path} with dimensions {r.dims.as_tuple()}")
    return r


def dumps(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def save_problem(r: Realization, path):
    """Write a problem file."""
    with open(path, "w") as f:
        f.write(dumps(problem_to_dict(r)))
    logger.info(f"Problem written to {path}")
    return path


def _encode_transfer(tf: TransferFunction):
    return {name: encode_matrix(M) for name, M in tf.to_dict().items()}


def _decode_transfer(obj, where):
    if not isinstance(obj, dict):
        raise ProblemFileError("expected an object", where)
    try:
        return TransferFunction(
            **{
                name: decode_matrix(obj.get(name), f"{where}.{name}")
                for name in ("D", "C", "A", "B")
            }
        )
    except RealizationError as e:
        raise ProblemFileError(str(e), where) from e


def solution_to_dict(r: Realization, cert, sol, supnorm=None) -> dict:
    return {
        "schema": SOLUTION_SCHEMA,
        "version": SCHEMA_VERSION,
        "dimensions": dict(zip("nmpq", r.dims.as_tuple())),
        "entropy": sol.entropy,
        "supnorm": supnorm,
        "realizations": {
            name: _encode_transfer(getattr(sol, name)) for name in SOLUTION_FUNCTIONS
        },
        "matrices": {"Q": encode_matrix(cert.Q), "DV": encode_matrix(sol.DV)},
        "certificate": cert.summary(),
        "metadata": dict(r.metadata),
    }


def save_solution(path, r: Realization, cert, sol, supnorm=None):
    """
    Write the realizations of X, U, V, V^-1 and Theta, the entropy, the
    sup-norm estimate of X and the certificate.
    """
    with open(path, "w") as f:
        f.write(dumps(solution_to_dict(r, cert, sol, supnorm)))
    logger.info(f"Solution written to {path}")
    return path


def read_solution(path) -> dict:
    """
    Read a solution file.

    Returns
    -------
    dict
        With keys "X", "U", "V", "Vinv", "Theta" (TransferFunction), "Q",
        "DV" (arrays), "entropy", "supnorm", "certificate" and "metadata".
    """
    with open(path, "r") as f:
        data = _parse_json(f.read(), path)
    _check_header(data, SOLUTION_SCHEMA)
    realizations = data.get("realizations", {})
    out = {
        name: _decode_transfer(realizations.get(name), f"realizations.{name}")
        for name in SOLUTION_FUNCTIONS
    }
    for name in ("Q", "DV"):
        out[name] = decode_matrix(data["matrices"][name], f"matrices.{name}")
    out["entropy"] = float(data["entropy"])
    out["supnorm"] = data.get("supnorm")
    out["certificate"] = data.get("certificate", {})
    out["metadata"] = data.get("metadata", {})
    return out


def compose_instance(G: TransferFunction, X0: TransferFunction, metadata=None):
    """
    Joint realization of [G, G X0] by series interconnection:

        A  = [[Ag, Bg Cx], [0, Ax]],  B1 = [[Bg], [0]],  B2 = [[Bg Dx], [Bx]],
        C  = [Cg, Dg Cx],  D1 = Dg,  D2 = Dg Dx.
    """
    ng, nx = G.n, X0.n
    m, p = G.shape
    if X0.shape[0] != p:
        raise RealizationError(
            f"X0 must have {p} rows to be multiplied by G, got {X0.shape[0]}"
        )
    q = X0.shape[1]
    A = np.block([[G.A, G.B @ X0.C], [np.zeros((nx, ng)), X0.A]])
    B1 = np.vstack([G.B, np.zeros((nx, p))])
    B2 = np.vstack([G.B @ X0.D, X0.B])
    C = np.hstack([G.C, G.D @ X0.C])
    return Realization(
        A=A,
        B1=B1,
        B2=B2,
        C=C,
        D1=G.D,
        D2=G.D @ X0.D,
        metadata=dict(metadata or {}),
    )


def _stable_matrix(rng, n, radius):
    if n == 0:
        return np.zeros((0, 0))
    M = rng.standard_normal((n, n))
    rho = spectral_radius(M)
    if rho == 0:
        return M
    return M * (radius * rng.uniform(0.5, 1.0) / rho)


def random_outer(rng, n, m, pole_radius, zero_radius):
    """
    Random square G = D + z C (I - zA)^-1 B with rho(A) <= pole_radius
    and the zeros, the eigenvalues of A - B D^-1 C, placed inside
    zero_radius. Returns None when the sample is unusable.
    """
    D = rng.standard_normal((m, m)) + 2.0 * np.eye(m)
    if np.linalg.cond(D) > 1e3:
        return None
    A = _stable_matrix(rng, n, pole_radius)
    B = rng.standard_normal((n, m))
    if n == 0:
        return TransferFunction(D, np.zeros((m, 0)), A, B)
    zeros = np.sort(rng.uniform(-zero_radius, zero_radius, size=n))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            placed = scipy.signal.place_poles(A, B, zeros)
    except (ValueError, np.linalg.LinAlgError):
        return None
    C = D @ placed.gain_matrix
    if spectral_radius(A - B @ np.linalg.solve(D, C)) >= zero_radius:
        return None
    return TransferFunction(D, C, A, B)


def random_contraction(rng, n, p, q, pole_radius, radius, grid_points=512):
    """Random stable X0 (p x q) scaled so that its grid sup-norm is `radius`."""
    X = TransferFunction(
        rng.standard_normal((p, q)),
        rng.standard_normal((p, n)),
        _stable_matrix(rng, n, pole_radius),
        rng.standard_normal((n, q)),
    )
    sup = float(supnorm_estimate(X, grid_points))
    if sup == 0:
        return None
    c = radius / sup
    return TransferFunction(c * X.D, c * X.C, X.A, X.B)


def _generate(seed, dims, radius, config, description):
    config = config if isinstance(config, ConfigManager) else ConfigManager(config)
    dims = dims if isinstance(dims, Dimensions) else Dimensions(*dims)
    n, m, p, q = dims.as_tuple()
    if m != p:
        raise ValueError(
            f"only square G is generated (m = p), got m={m}, p={p}; "
            "supply non-square instances by file"
        )
    ng = (n + 1) // 2
    nx = n - ng
    pole_radius = config.get("generator_pole_radius")
    zero_radius = config.get("generator_zero_radius")
    rng = np.random.default_rng(seed)
    for attempt in range(1, config.get("generator_max_retries") + 1):
        G = random_outer(rng, ng, m, pole_radius, zero_radius)
        if G is None:
            continue
        X0 = random_contraction(rng, nx, p, q, pole_radius, radius)
        if X0 is None:
            continue
        metadata = {
            "seed": seed,
            "radius": radius,
            "order_G": ng,
            "order_X0": nx,
            "description": description,
        }
        r = compose_instance(G, X0, metadata)
        violations = validate_realization(
            r, config.tolerance("observability_factor")
        )
        if violations:
            logger.debug(f"Attempt {attempt} rejected: {violations[0]}")
            continue
        logger.info(
            f"Generated instance seed={seed} dims={dims.as_tuple()} "
            f"after {attempt} attempt(s)"
        )
        return r
    raise GenerationError(
        f"no usable instance for seed={seed} after "
        f"{config.get('generator_max_retries')} attempts"
    )


def generate_instance(seed, dims, radius, config=None) -> Realization:
    """
    Random strictly positive instance K = G X0.

    G is square and invertible outer, X0 is a stable strict contraction
    with grid sup-norm `radius`, so that
    T_G T_G^* - T_K T_K^* = T_G (I - T_X0 T_X0^*) T_G^* is strictly
    positive. `dims` = (n, m, p, q) with n the total state order, split
    as ceil(n / 2) for G and the rest for X0.

    Raises
    ------
    ValueError
        If m != p or radius is not in (0, 1).
    GenerationError
        If the retry budget is exhausted.
    """
    if not 0 < radius < 1:
        raise ValueError(f"contraction radius must be in (0, 1), got {radius}")
    return _generate(seed, dims, radius, config, "strictly positive, K = G X0")


def generate_noncontractive_instance(seed, dims, radius=1.5, config=None):
    """
    Instance K = G X0 with sup |X0| = radius > 1, for which
    T_G T_G^* - T_K T_K^* is not positive.
    """
    if not radius > 1:
        raise ValueError(f"radius must exceed 1, got {radius}")
    return _generate(seed, dims, radius, config, "not positive, K = G X0")


def parse_dims(text):
    """'n,m,p,q' to Dimensions."""
    try:
        values = [int(v) for v in str(text).split(",")]
    except ValueError as e:
        raise ValueError(f"dimensions must be four integers n,m,p,q: {text!r}") from e
    if len(values) != 4:
        raise ValueError(f"dimensions must be four integers n,m,p,q: {text!r}")
    return Dimensions(*values)

