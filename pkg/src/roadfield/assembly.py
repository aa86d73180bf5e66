"""Piecewise-linear discretization of the field-road bilinear form.

Unknowns are nodal values of the field density ``v`` at mesh vertices and of
the road density ``u`` at mesh vertices lying on the road.  Because road
edges are mesh edges, the trace of ``v`` on the road is the restriction of
its nodal values, and every road integral is an exact 1D P1 integral.

The form is::

    B((v,u),(p,q)) = a*nu*(grad v, grad p)_field + b*mu*(u', q')_road
                     + ((nu*v - mu*u), (nu*p - mu*q))_road

with the weighted pivot product ``<(v,u),(p,q)>_L = nu*(v,p)_field + mu*(u,q)_road``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, ConfigurationError, DomainError
from .meshing import ROAD, Mesh


@dataclass(frozen=True)
class CouplingParams:
    """Diffusivities ``a`` (field), ``b`` (road) and exchange rates ``mu`` (road
    to field), ``nu`` (field to road)."""

    a: float = 1.0
    b: float = 1.0
    mu: float = 1.0
    nu: float = 1.0

    def __post_init__(self):
        for name in ("a", "b", "mu", "nu"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise DomainError(f"parameter {name} must be positive, got {val}")


def assemble_field(mesh: Mesh):
    """P1 stiffness and consistent mass matrices over all mesh vertices."""
    p = mesh.vertices[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    # b_i = y_j - y_k, c_i = x_k - x_j over cyclic (i, j, k)
    b = np.roll(y, -1, axis=1) - np.roll(y, -2, axis=1)
    c = np.roll(x, -2, axis=1) - np.roll(x, -1, axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    scale = max(float(np.abs(area).max(initial=0.0)), 1e-300)
    bad = np.nonzero(np.abs(area) <= 1e-14 * scale)[0]
    if len(bad) or len(area) == 0:
        raise AssemblyError(f"degenerate triangles: {bad[:10].tolist()}")
    area = np.abs(area)
    ke = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4.0 * area[:, None, None])
    me = area[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))[None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_vertices
    A = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((me.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return A, M


def _road_local(mesh: Mesh):
    rv = mesh.road_vertices
    local = np.full(mesh.n_vertices, -1, dtype=np.int64)
    local[rv] = np.arange(len(rv))
    return rv, local


def assemble_road(mesh: Mesh):
    """1D P1 stiffness and mass along the road.

    Rows and columns follow ``mesh.road_vertices`` (sorted mesh indices).
    """
    rv, local = _road_local(mesh)
    e = local[mesh.road_edges]
    ell = mesh.road_lengths()
    if np.any(ell <= 0):
        raise AssemblyError("zero-length road edge")
    ke = np.array([[1.0, -1.0], [-1.0, 1.0]])[None] / ell[:, None, None]
    me = np.array([[2.0, 1.0], [1.0, 2.0]])[None] * ell[:, None, None] / 6.0
    rows = np.repeat(e, 2, axis=1).ravel()
    cols = np.tile(e, (1, 2)).ravel()
    n = len(rv)
    A = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((me.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return A, M


def trace_operator(mesh: Mesh) -> sp.csr_matrix:
    """Restriction from all mesh vertices to road vertices (0/1 matrix)."""
    rv = mesh.road_vertices
    return sp.csr_matrix((np.ones(len(rv)), (np.arange(len(rv)), rv)), shape=(len(rv), mesh.n_vertices))


def assemble_trace_coupling(mesh: Mesh):
    """Road mass form between field traces and road values.

    Returns ``(T_ff, T_fr, T_rr)`` so that
    ``int_K (nu v - mu u)^2 = nu^2 v'T_ff v - 2 nu mu v'T_fr u + mu^2 u'T_rr u``.
    """
    _, M = assemble_road(mesh)
    P = trace_operator(mesh)
    T_fr = (P.T @ M).tocsr()
    T_ff = (T_fr @ P).tocsr()
    return T_ff, T_fr, M.tocsr()


@dataclass(frozen=True, eq=False)
class FemSystem:
    """Discrete operators restricted to the free (non-Dirichlet) unknowns.

    The unknown vector is ``[v at field_dofs, u at road_dofs]``; ``field_dofs``
    and ``road_dofs`` are mesh vertex indices.
    """

    B: sp.csr_matrix
    Lmass: sp.csr_matrix
    Hnorm: sp.csr_matrix
    field_dofs: np.ndarray
    road_dofs: np.ndarray
    params: CouplingParams
    mesh: Mesh | None = None
    field_stiffness: sp.csr_matrix | None = None
    road_stiffness: sp.csr_matrix | None = None
    coupling: sp.csr_matrix | None = None
    dirichlet_field: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    dirichlet_road: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    @property
    def n_dofs(self) -> int:
        return self.B.shape[0]

    @property
    def n_field(self) -> int:
        return len(self.field_dofs)

    @property
    def n_road(self) -> int:
        return len(self.road_dofs)

    def split(self, x):
        x = self._check(x)
        return x[: self.n_field], x[self.n_field :]

    def expand(self, x):
        """Nodal values ``(v over all mesh vertices, u over mesh.road_vertices)``."""
        v_free, u_free = self.split(x)
        v = np.zeros(self.mesh.n_vertices)
        v[self.field_dofs] = v_free
        rv, local = _road_local(self.mesh)
        u = np.zeros(len(rv))
        u[local[self.road_dofs]] = u_free
        return v, u

    def restrict(self, v, u=None):
        """Inverse of :meth:`expand`: pick free values out of nodal arrays."""
        v = np.asarray(v, float)
        parts = [v[self.field_dofs]]
        _, local = _road_local(self.mesh)
        parts.append(np.zeros(self.n_road) if u is None else np.asarray(u, float)[local[self.road_dofs]])
        return np.concatenate(parts)

    def energy_parts(self, x):
        """``(a nu E_field, b mu E_road, coupling energy)``; they sum to B(x, x)."""
        x = self._check(x)
        v, u = x[: self.n_field], x[self.n_field :]
        p = self.params
        ef = p.a * p.nu * float(v @ (self.field_stiffness @ v))
        er = p.b * p.mu * float(u @ (self.road_stiffness @ u)) if self.n_road else 0.0
        ec = float(x @ (self.coupling @ x))
        return ef, er, ec

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.n_dofs:
            raise DomainError(f"vector has length {x.shape[0]}, system has {self.n_dofs} dofs")
        return x


def build_system(mesh: Mesh, params: CouplingParams) -> FemSystem:
    """Assemble B, the L mass and the H Gram matrix with Dirichlet rows removed.

    The field vanishes on the domain boundary; the road vanishes where it
    meets the boundary.  Interior road endpoints carry the natural
    (no-flux) condition and need no action.
    """
    a, b, mu, nu = params.a, params.b, params.mu, params.nu
    A, M = assemble_field(mesh)
    rv = mesh.road_vertices
    if len(rv):
        AK, MK = assemble_road(mesh)
        T_ff, T_fr, T_rr = assemble_trace_coupling(mesh)
    else:
        AK = MK = T_rr = sp.csr_matrix((0, 0))
        T_ff = sp.csr_matrix(A.shape)
        T_fr = sp.csr_matrix((mesh.n_vertices, 0))

    free_f = np.nonzero(~mesh.on_boundary)[0]
    free_r_local = np.nonzero(mesh.markers[rv] == ROAD)[0]
    if len(free_f) + len(free_r_local) == 0:
        raise ConfigurationError("no free degrees of freedom after Dirichlet elimination")

    def sub(X, r, c):
        return X[r][:, c]

    Af = sub(A, free_f, free_f)
    Mf = sub(M, free_f, free_f)
    Tff = sub(T_ff, free_f, free_f)
    Tfr = sub(T_fr, free_f, free_r_local)
    Ar = sub(AK, free_r_local, free_r_local)
    Mr = sub(MK, free_r_local, free_r_local)
    Trr = sub(T_rr, free_r_local, free_r_local)

    coupling = sp.bmat([[nu * nu * Tff, -nu * mu * Tfr], [-nu * mu * Tfr.T, mu * mu * Trr]], format="csr")
    Bm = sp.bmat([[a * nu * Af, None], [None, b * mu * Ar]], format="csr") + coupling
    Lm = sp.block_diag([nu * Mf, mu * Mr], format="csr")
    Hm = sp.block_diag([nu * (Af + Mf), mu * (Ar + Mr)], format="csr")
    for X in (Bm, Lm, Hm, coupling):
        X.sum_duplicates()
        X.sort_indices()
    return FemSystem(
        B=Bm,
        Lmass=Lm,
        Hnorm=Hm,
        field_dofs=free_f,
        road_dofs=rv[free_r_local],
        params=params,
        mesh=mesh,
        field_stiffness=Af.tocsr(),
        road_stiffness=Ar.tocsr(),
        coupling=coupling,
        dirichlet_field=np.nonzero(mesh.on_boundary)[0],
        dirichlet_road=rv[mesh.markers[rv] != ROAD],
    )


def apply_B(sys: FemSystem, x) -> np.ndarray:
    return sys.B @ sys._check(x)


def apply_L(sys: FemSystem, x) -> np.ndarray:
    return sys.Lmass @ sys._check(x)


def inner_L(sys: FemSystem, x, y) -> float:
    return float(sys._check(x) @ (sys.Lmass @ sys._check(y)))


def inner_H(sys: FemSystem, x, y) -> float:
    return float(sys._check(x) @ (sys.Hnorm @ sys._check(y)))


def continuity_constant(sys: FemSystem, tol: float = 1e-10, seed: int = 0) -> float:
    """Largest eigenvalue of B relative to the H Gram matrix.

    This is the smallest C with ``|B(x, y)| <= C ||x||_H ||y||_H``; it is
    computed as the reciprocal of the smallest eigenvalue of the pencil (H, B).
    """
    from .spectral import generalized_eigenpairs

    return 1.0 / generalized_eigenpairs(sys.Hnorm, sys.B, 1, tol=tol, seed=seed).lambda1


def write_matrix(A, path) -> None:
    """Coordinate text dump of a symmetric matrix (lower triangle, 0-based)."""
    L = sp.tril(sp.csr_matrix(A)).tocoo()
    order = np.lexsort((L.col, L.row))
    lines = [f"symmetric {A.shape[0]} {L.nnz}"]
    lines += [f"{L.row[k]} {L.col[k]} {L.data[k]:.17g}" for k in order]
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def read_matrix(path) -> sp.csr_matrix:
    rows = Path(path).read_text().split("\n")
    kind, n, nnz = rows[0].split()
    if kind != "symmetric":
        raise ConfigurationError(f"unsupported matrix kind {kind!r}")
    data = np.loadtxt(rows[1 : 1 + int(nnz)], ndmin=2)
    n = int(n)
    if data.size == 0:
        return sp.csr_matrix((n, n))
    i, j, v = data[:, 0].astype(int), data[:, 1].astype(int), data[:, 2]
    L = sp.coo_matrix((v, (i, j)), shape=(n, n)).tocsr()
    return (L + sp.tril(L, -1).T).tocsr()
