"""Time evolution of the coupled field-road heat flow.

Two routes: the eigen-expansion ``sum_n c_n exp(-lam_n t) e_n`` with
``c_n = <e_n, s0>_L``, and backward Euler ``(L + dt B) s_{j+1} = L s_j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError
from .spectral import SPDFactor, Spectrum


@dataclass(frozen=True)
class State:
    """Free-dof coefficient vector at time ``t``."""

    values: np.ndarray
    t: float = 0.0


@dataclass
class EvolutionTrace:
    times: np.ndarray
    lnorms: np.ndarray
    snapshots: dict = field(default_factory=dict)  # step index -> State
    final: State | None = None

    def __len__(self):
        return len(self.times)


def _values(s):
    return np.asarray(s.values if isinstance(s, State) else s, dtype=float)


def l_norm(sys, x) -> float:
    x = np.asarray(x, float)
    return math.sqrt(max(float(x @ (sys.Lmass @ x)), 0.0))


def project_initial(sys, spec: Spectrum, s0) -> np.ndarray:
    """Expansion coefficients ``c_n(0) = <e_n, s0>_L``."""
    x = _values(s0)
    if x.shape[0] != spec.eigenvectors.shape[0] or x.shape[0] != sys.Lmass.shape[0]:
        raise DomainError("state and spectrum dimensions differ")
    return spec.eigenvectors.T @ (sys.Lmass @ x)


def spectral_propagate(spec: Spectrum, c0, t: float) -> State:
    """Exact solution of the flow truncated to the modes in ``spec``."""
    if t < 0:
        raise DomainError("time must be nonnegative")
    c = np.asarray(c0, float) * np.exp(-spec.eigenvalues * t)
    return State(spec.eigenvectors @ c, float(t))


def implicit_euler(sys, s0, dt: float, T: float, snapshot_every: int = 0) -> EvolutionTrace:
    """Backward Euler with one factorization of ``L + dt B``.

    The number of steps is ``round(T / dt)``.  L-norms are recorded every
    step; full states every ``snapshot_every`` steps (0 disables).
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    if not T >= dt * (1 - 1e-12):
        raise DomainError("T must be at least dt")
    steps = int(round(T / dt))
    x = _values(s0).copy()
    if x.shape[0] != sys.B.shape[0]:
        raise DomainError("initial state has the wrong dimension")
    t0 = s0.t if isinstance(s0, State) else 0.0
    fac = SPDFactor(sys.Lmass + dt * sys.B)
    times = t0 + dt * np.arange(steps + 1)
    norms = np.empty(steps + 1)
    norms[0] = l_norm(sys, x)
    snaps = {0: State(x.copy(), t0)} if snapshot_every else {}
    for j in range(1, steps + 1):
        x = fac.solve(sys.Lmass @ x)
        norms[j] = l_norm(sys, x)
        if snapshot_every and j % snapshot_every == 0:
            snaps[j] = State(x.copy(), float(times[j]))
    if not np.all(np.isfinite(norms)):
        raise NumericalError("non-finite state during time stepping")
    return EvolutionTrace(times, norms, snaps, State(x, float(times[-1])))


def decay_rate_fit(trace: EvolutionTrace, window: float = 0.5):
    """Least-squares exponential rate over the trailing ``window`` fraction.

    Returns ``(rate, residual)`` with ``rate = -d log||s||_L / dt`` and the
    RMS misfit of the log-linear model.  Samples below 1e-300 are dropped.
    """
    if not 0 < window <= 1:
        raise DomainError("window must lie in (0, 1]")
    t = np.asarray(trace.times, float)
    y = np.asarray(trace.lnorms, float)
    keep = y > 1e-300
    t, y = t[keep], y[keep]
    start = t[0] + (1.0 - window) * (t[-1] - t[0]) if len(t) else 0.0
    sel = t >= start
    t, y = t[sel], y[sel]
    if len(t) < 10:
        raise DomainError(f"decay fit needs at least 10 samples, window has {len(t)}")
    ly = np.log(y)
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - ly) ** 2)))
    return float(-coef[0]), resid


def bump(sys, domain=None) -> np.ndarray:
    """Smooth field datum ``sin^2 sin^2`` over the domain's bounding box, zero on the road."""
    mesh = sys.mesh
    lo, hi = (mesh.vertices.min(0), mesh.vertices.max(0)) if domain is None else domain.bounding_box()
    xy = (mesh.vertices - lo) / (hi - lo)
    v = np.sin(np.pi * xy[:, 0]) ** 2 * np.sin(np.pi * xy[:, 1]) ** 2
    return sys.restrict(v)


_SAFE = {name: getattr(np, name) for name in ("sin", "cos", "exp", "sqrt", "tanh", "abs", "log", "where", "minimum", "maximum")}
_SAFE["pi"] = np.pi


def nodal_expression(expr: str, points) -> np.ndarray:
    """Evaluate an expression in ``x``, ``y`` with numpy math at the given points."""
    pts = np.asarray(points, float)
    env = dict(_SAFE, x=pts[:, 0], y=pts[:, 1])
    try:
        val = eval(compile(expr, "<expr>", "eval"), {"__builtins__": {}}, env)  # noqa: S307
    except Exception as exc:
        raise DomainError(f"cannot evaluate initial datum {expr!r}: {exc}") from None
    return np.broadcast_to(np.asarray(val, float), (len(pts),)).copy()


def initial_state(sys, v0: str = "bump", u0: str = "0") -> np.ndarray:
    """Initial free-dof vector from expression strings (``"bump"`` is the default datum)."""
    mesh = sys.mesh
    if v0 == "bump":
        x = bump(sys)
        v_free = x[: sys.n_field]
    else:
        v_free = nodal_expression(v0, mesh.vertices[sys.field_dofs])
    u_free = nodal_expression(u0, mesh.vertices[sys.road_dofs])
    return np.concatenate([v_free, u_free])
