"""
Verification reports: every algebraic identity of the solution is
evaluated and recorded with its residual and tolerance, and the
finite-section oracle is compared with the closed-form synthesis.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas

from . import logging_config
from .ConfigManager import ConfigManager
from .MatrixEquations import (
    ProblemData,
    RiccatiCertificate,
    riccati_residual,
)
from .Realization import (
    Realization,
    circle_points,
    eval_R_grid,
    matrix_norm,
    mcmillan_degree_estimate,
    min_eigenvalue,
    spectral_radius,
)
from .Synthesis import (
    MetricViolationError,
    SolutionBundle,
    entropy_integral,
    factor_residual,
    interpolation_residual,
    spectral_factor_residual,
    supnorm_estimate,
)
from .ToeplitzOracle import (
    OraclePreconditionError,
    build_sections,
    central_solution_taylor,
    check_inversion_identities,
    lambda_entropy,
    positivity_margin,
    realization_taylor,
    section_entropy,
    section_spectral_radius,
    select_sections,
    tail_bound,
)

logger = logging_config.logger

REPORT_SCHEMA = "leechsolver.report"
REPORT_VERSION = 1


@dataclass(frozen=True)
class CheckRecord:
    """
    One check: `identity` is the relation being tested, `residual` the
    measured value and `tolerance` the bound it was held to. For strict
    checks the residual must be below the tolerance.
    """

    name: str
    identity: str
    residual: float
    tolerance: float
    passed: bool
    mandatory: bool = True
    group: str = "identity"


def _check(name, identity, residual, tolerance, mandatory=True, group="identity",
           strict=False):
    residual = float(residual)
    tolerance = float(tolerance)
    if strict:
        passed = residual < tolerance
    else:
        passed = residual <= tolerance
    passed = bool(passed and np.isfinite(residual))
    if not passed:
        log = logger.warning if mandatory else logger.info
        kind = "mandatory" if mandatory else "informational"
        log(f"{kind} check {name} failed: {residual:.3e} > {tolerance:.3e}")
    return CheckRecord(name, identity, residual, tolerance, passed, mandatory, group)


@dataclass
class VerificationReport:
    """
    Records of all checks on one instance. The report passes when every
    mandatory check passes; informational checks are kept but ignored.
    """

    records: List[CheckRecord] = field(default_factory=list)
    fingerprint: Dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(rec.passed for rec in self.records if rec.mandatory)

    def failures(self, mandatory_only=True):
        return [
            rec
            for rec in self.records
            if not rec.passed and (rec.mandatory or not mandatory_only)
        ]

    def __getitem__(self, name):
        for rec in self.records:
            if rec.name == name:
                return rec
        raise KeyError(name)

    def names(self):
        return [rec.name for rec in self.records]

    def merge(self, other: "VerificationReport") -> "VerificationReport":
        return VerificationReport(
            records=self.records + other.records,
            fingerprint=self.fingerprint | other.fingerprint,
        )

    def to_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "passed": self.passed,
            "fingerprint": self.fingerprint,
            "records": [asdict(rec) for rec in self.records],
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"not a verification report: {data.get('schema')!r}")
        return cls(
            records=[CheckRecord(**rec) for rec in data["records"]],
            fingerprint=dict(data.get("fingerprint", {})),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_dataframe(self):
        """One row per check, for CSV summaries."""
        columns = [f for f in CheckRecord.__dataclass_fields__]
        return pandas.DataFrame([asdict(rec) for rec in self.records], columns=columns)


def fingerprint(r: Realization) -> dict:
    n, m, p, q = r.dims.as_tuple()
    return {
        "dimensions": {"n": n, "m": m, "p": p, "q": q},
        "seed": r.metadata.get("seed"),
        "rho_A": spectral_radius(r.A),
    }


def _h(M):
    return M.conj().T


def _scale(*matrices):
    return 1.0 + max([matrix_norm(M) for M in matrices] + [0.0])


def _conditioning(r, cert):
    """(1 - rho(A))^-1 * max(1, 1 / min eig Delta)."""
    rho = spectral_radius(r.A)
    return max(1.0, 1.0 / cert.min_eig_delta) / (1.0 - rho)


def resolvent_residual(r, pd, cert, grid_points=32):
    """
    max over the grid of
    |R(z) C0 (I - zA0)^-1 - C (I - zA)^-1 - Gamma^* (zI - A^*)^-1 Q|.
    """
    n = r.A.shape[0]
    if n == 0:
        return 0.0
    _, zs = circle_points(grid_points)
    I = np.eye(n)
    Rv = eval_R_grid(r, pd, zs)
    lhs = Rv @ (
        cert.C0[None] @ np.linalg.inv(I[None] - zs[:, None, None] * cert.A0[None])
    )
    first = r.C[None] @ np.linalg.inv(I[None] - zs[:, None, None] * r.A[None])
    second = pd.Gamma.conj().T[None] @ np.linalg.inv(
        zs[:, None, None] * I[None] - r.A.conj().T[None]
    ) @ cert.Q[None]
    return float(np.max(np.linalg.norm(lhs - first - second, 2, axis=(1, 2))))


def run_identity_suite(
    r: Realization,
    pd: ProblemData,
    cert: RiccatiCertificate,
    sol: SolutionBundle,
    config=None,
) -> VerificationReport:
    """
    Evaluate the algebraic identities linking the realization, the
    certificate and the synthesized solution, and the properties of the
    solution on the unit circle.

    Parameters
    ----------
    r, pd, cert, sol
        Outputs of one pipeline run.
    config : ConfigManager or dict, optional

    Returns
    -------
    VerificationReport
    """
    config = config if isinstance(config, ConfigManager) else ConfigManager(config)
    tol = config.tolerance
    kappa = _conditioning(r, cert)
    A, B1, B2, C, D1, D2 = r.A, r.B1, r.B2, r.C, r.D1, r.D2
    Q, A0, C0, Delta = cert.Q, cert.A0, cert.C0, cert.Delta
    N = pd.N
    O, O0 = sol.Omega, sol.Omega0
    records = []

    def identity(name, text, lhs, rhs, *terms, tol_name="identity",
                 mandatory=True):
        scale = _scale(lhs, rhs, *terms)
        records.append(
            _check(
                name,
                text,
                matrix_norm(lhs - rhs),
                tol(tol_name) * scale * kappa,
                mandatory=mandatory,
            )
        )

    identity("stein_P1", "P1 - A P1 A^* = B1 B1^*", pd.P1 - A @ pd.P1 @ _h(A),
             B1 @ _h(B1), pd.P1)
    identity("stein_P2", "P2 - A P2 A^* = B2 B2^*", pd.P2 - A @ pd.P2 @ _h(A),
             B2 @ _h(B2), pd.P2)
    records.append(
        _check(
            "riccati",
            "Q = A^*QA + (C - Gamma^*QA)^* Delta^-1 (C - Gamma^*QA)",
            riccati_residual(r, pd, Q),
            tol("riccati") * (1.0 + matrix_norm(Q)),
        )
    )
    identity("stein_Q_A0", "Q - A^* Q A0 = C^* C0", Q - _h(A) @ Q @ A0,
             _h(C) @ C0, Q, tol_name="riccati")
    identity("stein_Q_Delta", "Q - A^* Q A = C0^* Delta C0", Q - _h(A) @ Q @ A,
             _h(C0) @ Delta @ C0, Q, tol_name="riccati")
    identity("B1C1_B2C2", "B1 C1 - B2 C2 = A Omega0 - Omega0 A0",
             B1 @ sol.C1 - B2 @ sol.C2, A @ O0 - O0 @ A0, O0)
    identity("D1C1_D2C2", "D1 C1 - D2 C2 = C Omega0",
             D1 @ sol.C1 - D2 @ sol.C2, C @ O0, O0)
    identity("B1DU_B2DV", "B1 DU - B2 DV = -Omega0 B0",
             B1 @ sol.DU - B2 @ sol.DV, -O0 @ sol.B0, O0, sol.DV)
    identity("D1DU_D2DV", "D1 DU - D2 DV = 0",
             D1 @ sol.DU - D2 @ sol.DV, np.zeros_like(D1 @ sol.DU), sol.DV)
    identity("omega_relation", "Omega + N + N Q Omega = 0, N = P2 - P1",
             O + N + N @ Q @ O, np.zeros_like(O), O, N)
    records.append(
        _check(
            "resolvent",
            "R(z) C0 (I - zA0)^-1 = C (I - zA)^-1 + Gamma^* (zI - A^*)^-1 Q",
            resolvent_residual(r, pd, cert, config.get("grid_resolvent")),
            tol("resolvent") * _scale(pd.R0, Q, C, C0) * kappa,
        )
    )
    S = Q + Q @ N @ Q
    identity(
        "closing_identity",
        "C1^*C1 - C2^*C2 = (Q + QNQ) - A0^*(Q + QNQ)A0",
        _h(sol.C1) @ sol.C1 - _h(sol.C2) @ sol.C2,
        S - _h(A0) @ S @ A0,
        S,
        mandatory=bool(config.get("promote_closing_identity")),
    )

    records.append(
        _check("omega_forms", "(P1-P2)(I+QN)^-1 = (P1-P2)(Q^-1+N)^-1 Q^-1",
               sol.omega_discrepancy, tol("identity") * _scale(O) * kappa)
    )
    records.append(
        _check("b0_forms", "B0 = B2 - Gamma D0 + A Omega C2^*",
               sol.b0_discrepancy, tol("identity") * _scale(sol.B0, O) * kappa)
    )

    # Solution on the circle
    grid = config.get("grid_residual")
    k_sup = float(supnorm_estimate(r.K, grid, refine_depth=0))
    v_sup = float(supnorm_estimate(sol.V, grid, refine_depth=0))
    records.append(
        _check("interpolation", "G X = K", interpolation_residual(r, sol.X, grid),
               tol("interpolation") * (1.0 + k_sup), group="circle")
    )
    records.append(
        _check("factor", "G U = K V", factor_residual(r, sol.U, sol.V, grid),
               tol("interpolation") * (1.0 + k_sup) * (1.0 + v_sup),
               group="circle")
    )
    records.append(
        _check("spectral_factor", "I - X^*X = Theta^*Theta",
               spectral_factor_residual(sol.X, sol.Theta, grid),
               tol("spectral_factor"), group="circle")
    )
    sup = supnorm_estimate(
        sol.X,
        grid,
        refine_depth=config.get("supnorm_refine_depth"),
        candidates=config.get("supnorm_refine_candidates"),
    )
    records.append(
        _check("contraction", "sup |X(e^iw)| < 1", sup.value, 1.0 - 1e-6,
               group="circle", strict=True)
    )
    try:
        integral = entropy_integral(sol.X, config.get("grid_entropy"))
        entropy_error = abs(integral - sol.entropy)
    except MetricViolationError as e:
        logger.warning(str(e))
        entropy_error = float("inf")
    records.append(
        _check("entropy_integral", "(1/2pi) int ln det(I - X^*X) = -ln det DV",
               entropy_error, tol("entropy") * max(abs(sol.entropy), 1e-6),
               group="circle")
    )

    degree = mcmillan_degree_estimate(sol.X, config.tolerance("rank"))
    records.append(
        _check("degree", "McMillan degree of X <= n", degree, r.dims.n,
               group="structure")
    )
    records.append(
        _check("stable_Across", "rho(A^x) < 1", spectral_radius(sol.Across), 1.0,
               group="structure", strict=True)
    )
    records.append(
        _check("stable_A0", "rho(A0) < 1", cert.rho_a0, 1.0, group="structure",
               strict=True)
    )
    records.append(
        _check("positive_DV", "DV > 0", -min_eigenvalue(sol.DV), 0.0,
               group="structure", strict=True)
    )
    records.append(
        _check("positive_Delta", "Delta > 0", -cert.min_eig_delta, 0.0,
               group="structure", strict=True)
    )
    records.append(
        _check("condition_ii", "Q^-1 + P2 - P1 > 0", -cert.min_eig_cond_ii, 0.0,
               group="structure", strict=True)
    )

    report = VerificationReport(records=records, fingerprint=fingerprint(r))
    logger.info(
        f"Identity suite: {sum(rec.passed for rec in records)}/{len(records)} "
        f"checks passed, verdict {'PASS' if report.passed else 'FAIL'}"
    )
    return report


def run_operator_suite(
    r: Realization,
    pd: ProblemData,
    cert: RiccatiCertificate,
    sol: SolutionBundle,
    N: Optional[int] = None,
    config=None,
) -> VerificationReport:
    """
    Compare the closed-form solution with the finite-section oracle.

    Parameters
    ----------
    r, pd, cert, sol
        Outputs of one pipeline run on a strictly positive instance.
    N : int, optional
        Number of block rows. By default chosen by select_sections, with
        'oracle_sections' as the floor.
    config : ConfigManager or dict, optional

    Returns
    -------
    VerificationReport

    Raises
    ------
    OraclePreconditionError
        If the section of T_G T_G^* - T_K T_K^* is not positive definite.
    """
    config = config if isinstance(config, ConfigManager) else ConfigManager(config)
    tol = config.tolerance
    N = N or select_sections(r, pd, cert, config)
    bundle = build_sections(r, N, pd, cert)
    if not bundle.positive:
        raise OraclePreconditionError(
            f"section N={N} of T_G T_G^* - T_K T_K^* is not positive definite"
        )
    records = []
    margin = positivity_margin(bundle)
    records.append(
        _check("positivity_margin", "min eig(T_G T_G^* - T_K T_K^*) > 0", -margin,
               0.0, group="operator", strict=True)
    )

    inv = check_inversion_identities(bundle, pd, cert)
    oracle_tol = tol("oracle") * inv.scale
    m_scale = 1.0 + 1.0 / margin
    for name, text, value, bound in (
        ("trp1p2", "T_G T_G^* - T_K T_K^* = T_R + W_obs (P2 - P1) W_obs^*",
         inv.trp1p2, oracle_tol),
        ("inverse_formula", "M^-1 = T_R^-1 + W0 Omega W0^*",
         inv.inverse_formula, tol("oracle") * max(inv.scale, m_scale)),
        ("w0_recovery", "T_R^-1 W_obs = W0", inv.w0_recovery, oracle_tol),
        ("q_recovery", "Q = W_obs^* T_R^-1 W_obs", inv.q_recovery, oracle_tol),
        ("lambda_inverse", "(I - L^*L)^-1 = I + T_K^* M^-1 T_K",
         inv.lambda_inverse, tol("oracle") * m_scale),
        ("lambda_product", "L (I - L^*L)^-1 = T_G^* M^-1 T_K",
         inv.lambda_product, tol("oracle") * m_scale),
    ):
        records.append(_check(name, text, value, bound, group="operator"))
    records.append(
        _check("lambda_contraction", "|Lambda_N| < 1", inv.lambda_norm, 1.0,
               group="operator", strict=True)
    )

    count = min(config.get("taylor_count"), N)
    oracle = central_solution_taylor(bundle, count)
    closed = sol.X.taylor(count)
    records.append(
        _check("taylor_agreement", "Taylor coefficients of X = U V^-1 from sections",
               float(np.max(np.abs(oracle - closed))), tol("taylor"),
               group="operator")
    )
    ent = section_entropy(bundle)
    records.append(
        _check("section_entropy", "-ln det[E^*(I - L^*L)^-1 E] = -ln det DV",
               abs(ent - sol.entropy), tol("entropy") * max(1.0, abs(sol.entropy)),
               group="operator")
    )
    records.append(
        _check("lambda_entropy", "entropy from Lambda = entropy from Xi",
               abs(lambda_entropy(bundle) - ent), tol("oracle") * m_scale,
               group="operator")
    )

    # Informational: realization through F and the spectral radius of F
    route = realization_taylor(bundle, count)
    records.append(
        _check("realization_route", "Taylor coefficients of X through F",
               float(np.max(np.abs(route - closed))), tol("taylor"),
               mandatory=False, group="operator")
    )
    records.append(
        _check("spectral_radius_F", "rho(F_N) <= 1 + tail",
               section_spectral_radius(bundle), 1.0 + tail_bound(r, N),
               mandatory=False, group="operator")
    )

    fp = fingerprint(r) | {"sections": N}
    report = VerificationReport(records=records, fingerprint=fp)
    logger.info(
        f"Operator suite (N={N}): {sum(rec.passed for rec in records)}/"
        f"{len(records)} checks passed, verdict {'PASS' if report.passed else 'FAIL'}"
    )
    return report

