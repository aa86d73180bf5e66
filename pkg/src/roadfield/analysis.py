"""Explicit constants and bounds for the field-road form, and the road
efficiency ratio ``lambda_1 / gamma_1``.

All constants are the optimal ones of the discrete spaces, so every
inequality below holds exactly (up to round-off) at the discrete level.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from .assembly import CouplingParams, FemSystem, assemble_field, assemble_trace_coupling
from .errors import ConfigurationError, ConvergenceError, DomainError
from .network import RoadNetwork, ahlfors_upper_constant
from .spectral import SPDFactor, Spectrum, dirichlet_gamma


def _positive(**kw):
    for name, val in kw.items():
        if not (np.isfinite(val) and val > 0):
            raise DomainError(f"{name} must be positive, got {val}")


def poincare_constant(mesh) -> float:
    """``C_P = 1 / gamma_1`` for the unit-diffusivity Dirichlet Laplacian."""
    return 1.0 / float(dirichlet_gamma(mesh, 1.0, k=1)[0])


def _trace_pencil(mesh):
    A, _ = assemble_field(mesh)
    T, _, _ = assemble_trace_coupling(mesh)
    free = np.nonzero(~mesh.on_boundary)[0]
    if len(free) == 0 or len(mesh.road_vertices) == 0:
        raise DomainError("trace constant needs interior vertices and a road")
    return T[free][:, free].tocsr(), A[free][:, free].tocsr()


def trace_constant(mesh, tol: float = 1e-13, maxiter: int = 20000, seed: int = 0) -> float:
    """Best ``C_T`` with ``int_K v^2 <= C_T int_Omega |grad v|^2`` over the field space.

    Power iteration on ``A^{-1} T`` with Rayleigh-quotient stopping.
    """
    T, A = _trace_pencil(mesh)
    fac = SPDFactor(A)
    x = np.random.default_rng(seed).standard_normal(A.shape[0])
    x = fac.solve(T @ x)
    lam = 0.0
    for _ in range(maxiter):
        y = fac.solve(T @ x)
        new = float(x @ (T @ x)) / float(x @ (A @ x))
        x = y / np.linalg.norm(y)
        if abs(new - lam) <= tol * new:
            return new
        lam = new
    raise ConvergenceError("trace-constant power iteration did not converge", best_residual=abs(new - lam) / new)


def trace_constant_dense(mesh) -> float:
    """Dense generalized eigenvalue oracle for :func:`trace_constant`."""
    T, A = _trace_pencil(mesh)
    return float(sla.eigh(T.toarray(), A.toarray(), eigvals_only=True)[-1])


def elementary_inequality_check(alpha_v: float, beta_v: float, eps: float) -> bool:
    """``(alpha - beta)^2 + eps alpha^2 >= eps / (1 + eps) beta^2`` for ``eps >= 0``."""
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    lhs = (alpha_v - beta_v) ** 2 + eps * alpha_v**2
    rhs = eps / (1.0 + eps) * beta_v**2
    # the gap equals (1+eps)(alpha - beta/(1+eps))^2; allow round-off on that scale
    slack = 8 * np.finfo(float).eps * (lhs + rhs)
    return bool(lhs >= rhs - slack)


def coercivity_constant(params: CouplingParams, C_P: float, C_T: float) -> float:
    """``min(a/3, a/(3 C_P), b, a mu / (a + 3 C_T nu))``."""
    a, b, mu, nu = params.a, params.b, params.mu, params.nu
    _positive(a=a, b=b, mu=mu, nu=nu, C_P=C_P, C_T=C_T)
    return min(a / 3.0, a / (3.0 * C_P), b, a * mu / (a + 3.0 * C_T * nu))


def trinomial(a, mu, nu, C_P, C_T, X):
    """``a X^2 - (a + C_P mu + C_T nu) X + C_P mu``."""
    return a * X * X - (a + C_P * mu + C_T * nu) * X + C_P * mu


def alpha_root(a: float, mu: float, nu: float, C_P: float, C_T: float) -> float:
    """Smaller root of the trinomial, which lies in (0, 1).

    Evaluated as ``2 C_P mu / (s + sqrt(disc))`` with ``s = a + C_P mu + C_T nu``
    and ``disc = (a + C_T nu - C_P mu)^2 + 4 C_T C_P nu mu``; both forms avoid
    cancellation.
    """
    _positive(a=a, mu=mu, nu=nu, C_P=C_P, C_T=C_T)
    p, q = C_P * mu, C_T * nu
    s = a + p + q
    disc = (a + q - p) ** 2 + 4.0 * q * p
    alpha = 2.0 * p / (s + math.sqrt(disc))
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"trinomial root {alpha} outside (0, 1)")
    return alpha


def lambda1_lower_bound(a: float, C_P: float, alpha: float) -> float:
    """``c0 = (a / C_P) * alpha``."""
    _positive(a=a, C_P=C_P)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return a / C_P * alpha


@dataclass
class ConstantsReport:
    C_P: float
    C_T: float
    Lambda_K: float
    alpha: float
    c0: float
    c_coer: float
    notes: dict = field(default_factory=dict)


@dataclass
class EfficiencyReport:
    lambda1: float
    gamma1: float
    ratio: float
    classification: str
    constants: ConstantsReport | None
    road: str = ""
    length: float = float("nan")
    bound_holds: bool | None = None

    def row(self) -> dict:
        out = {
            "road": self.road,
            "length": self.length,
            "lambda1": self.lambda1,
            "gamma1": self.gamma1,
            "ratio": self.ratio,
            "classification": self.classification,
        }
        if self.constants is not None:
            c = asdict(self.constants)
            c.pop("notes")
            out.update(c)
            out["bound_holds"] = self.bound_holds
        return out


def classify(ratio: float, band: float = 1e-3) -> str:
    if ratio > 1.0 + band:
        return "improves"
    if ratio < 1.0 - band:
        return "slows"
    return "neutral"


def constants_report(mesh, params: CouplingParams, net: RoadNetwork | None = None, gamma1_unit: float | None = None,
                     edge_samples: int = 8) -> ConstantsReport:
    """Discrete-optimal C_P, C_T and the derived bounds on ``mesh``.

    ``gamma1_unit`` (first Dirichlet eigenvalue with unit diffusivity on the
    same mesh) is computed when not supplied.
    """
    g = float(dirichlet_gamma(mesh, 1.0, k=1)[0]) if gamma1_unit is None else gamma1_unit
    C_P = 1.0 / g
    C_T = trace_constant(mesh)
    lam_K = ahlfors_upper_constant(net, edge_samples).value if net is not None else float("nan")
    alpha = alpha_root(params.a, params.mu, params.nu, C_P, C_T)
    return ConstantsReport(
        C_P=C_P,
        C_T=C_T,
        Lambda_K=lam_K,
        alpha=alpha,
        c0=lambda1_lower_bound(params.a, C_P, alpha),
        c_coer=coercivity_constant(params, C_P, C_T),
        notes={"mesh_vertices": mesh.n_vertices, "mesh": mesh.fingerprint[:12], "edge_samples": edge_samples},
    )


def efficiency_report(
    sys: FemSystem,
    spectrum: Spectrum,
    gamma1: float,
    gamma_mesh,
    net: RoadNetwork | None = None,
    band: float = 1e-3,
    with_constants: bool = True,
    road: str = "",
    baseline: bool = False,
) -> EfficiencyReport:
    """Ratio ``lambda_1 / gamma_1`` with its classification and the bound chain.

    ``gamma1`` must come from ``gamma_mesh`` with the same diffusivity ``a``.
    Unless ``baseline`` is set, ``gamma_mesh`` must be the mesh of ``sys``;
    with ``baseline=True`` gamma_1 is a road-free reference value at the
    same resolution and C_P is recomputed on the mesh of ``sys``.
    """
    same = gamma_mesh is not None and gamma_mesh.fingerprint == sys.mesh.fingerprint
    if not same and not baseline:
        raise ConfigurationError("gamma_1 and lambda_1 were computed on different meshes", operation="efficiency_report")
    lam1 = spectrum.lambda1
    gamma1 = float(gamma1)
    ratio = lam1 / gamma1
    consts = None
    holds = None
    if with_constants:
        consts = constants_report(sys.mesh, sys.params, net, gamma1_unit=gamma1 / sys.params.a if same else None)
        consts.notes["gamma1_source"] = "same mesh" if same else "road-free baseline mesh"
        holds = bool(consts.c0 <= lam1 * (1 + 1e-12))
    length = float(net.edge_lengths.sum()) if net is not None else float("nan")
    return EfficiencyReport(lam1, gamma1, ratio, classify(ratio, band), consts, road, length, holds)
