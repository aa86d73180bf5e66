"""Smallest eigenpairs of symmetric-definite pencils ``B x = lam L x``.

The iterative solver is a shift-invert block subspace iteration: a sparse
factorization of ``B - sigma L`` is computed once, unconverged Ritz vectors
are pushed through the inverse, and a Rayleigh-Ritz step on the span of
locked and new vectors restores L-orthonormality each sweep.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import assemble_field
from .errors import ConvergenceError, DomainError, NumericalError


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending eigenvalues with L-orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    clusters: tuple
    iterations: int = 0

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    def cluster_size(self, i: int = 0) -> int:
        for c in self.clusters:
            if i in c:
                return len(c)
        return 1


STALL_SWEEPS = 50


def _clusters(vals, rtol):
    groups, cur = [], [0]
    for i in range(1, len(vals)):
        if abs(vals[i] - vals[cur[0]]) <= rtol * abs(vals[i]):
            cur.append(i)
        else:
            groups.append(tuple(cur))
            cur = [i]
    if len(vals):
        groups.append(tuple(cur))
    return tuple(groups)


def _residuals(B, L, X, lam):
    LX = L @ X
    R = B @ X - LX * lam
    den = np.linalg.norm(LX * lam, axis=0)
    den = np.where(den > 0, den, 1.0)
    return np.linalg.norm(R, axis=0) / den


class SPDFactor:
    """Sparse LU with symmetric ordering and diagonal pivoting.

    With identical row and column permutations and a positive diagonal of U
    the factorization is an LDL' of an SPD matrix; anything else raises
    :class:`NumericalError`.
    """

    def __init__(self, A):
        A = sp.csc_matrix(A)
        try:
            self.lu = splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise NumericalError(f"factorization failed: {exc}") from None
        d = self.lu.U.diagonal()
        if not np.array_equal(self.lu.perm_r, self.lu.perm_c) or np.any(d <= 0) or not np.all(np.isfinite(d)):
            raise NumericalError("matrix is not symmetric positive definite")

    def solve(self, b):
        return self.lu.solve(np.asarray(b, dtype=float))


def _factor_shifted(B, L):
    try:
        return SPDFactor(B), 0.0
    except NumericalError:
        scale = B.diagonal().sum() / L.diagonal().sum()
        sigma = -1e-8 * scale
        return SPDFactor(B - sigma * L), sigma


def generalized_eigenpairs(B, L, k, tol=1e-8, maxiter=1000, seed=0, block=None, cluster_rtol=1e-8):
    """``k`` smallest eigenpairs of the SPD pencil (B, L).

    Parameters
    ----------
    B, L : sparse symmetric positive definite matrices
    k : int
        Number of pairs, ``1 <= k <= n``.
    tol : float
        Relative residual target ``||B x - lam L x|| / ||lam L x||``.
    block : int, optional
        Subspace size; default ``max(2k, k + 8)`` capped at n.
    """
    B = sp.csr_matrix(B)
    L = sp.csr_matrix(L)
    n = B.shape[0]
    if not 1 <= k <= n:
        raise DomainError(f"requested {k} eigenpairs of a {n}x{n} pencil")
    if not tol > 0:
        raise DomainError("tolerance must be positive")
    p = min(n, block or max(2 * k, k + 8))
    fac, _ = _factor_shifted(B, L)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    nconv = 0
    best = np.inf
    best_it = 0
    lam = res = None
    for it in range(1, maxiter + 1):
        Y = fac.solve(L @ X[:, nconv:])
        if Y.ndim == 1:
            Y = Y[:, None]
        Y /= np.linalg.norm(Y, axis=0)
        Q, _ = np.linalg.qr(np.hstack([X[:, :nconv], Y]))
        Bq = Q.T @ (B @ Q)
        Lq = Q.T @ (L @ Q)
        Bq = 0.5 * (Bq + Bq.T)
        Lq = 0.5 * (Lq + Lq.T)
        try:
            lam, W = sla.eigh(Bq, Lq)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"Rayleigh-Ritz step failed: {exc}") from None
        X = Q @ W
        res = _residuals(B, L, X[:, :k], lam[:k])
        if res.max() < 0.9 * best:
            best, best_it = float(res.max()), it
        ok = res <= tol
        nconv = k if ok.all() else int(np.argmin(ok))
        if nconv == k or p == n:
            break
        if it - best_it >= STALL_SWEEPS:
            # residuals sit at the round-off floor of this pencil
            raise ConvergenceError(
                f"subspace iteration stalled at residual {best:.3g} above tol={tol:g}", best_residual=best
            )
    else:
        raise ConvergenceError(
            f"subspace iteration did not reach tol={tol:g} in {maxiter} sweeps", best_residual=best
        )
    if np.any(lam[:k] <= 0) or not np.all(np.isfinite(lam[:k])):
        raise NumericalError("non-positive eigenvalue for an SPD pencil")
    X = X[:, :k]
    # fix signs so the largest-magnitude entry is positive (reproducible output)
    idx = np.argmax(np.abs(X), axis=0)
    X = X * np.sign(X[idx, np.arange(k)])
    vals = lam[:k].copy()
    return Spectrum(vals, X, res, _clusters(vals, cluster_rtol), it)


def smallest_eigenpairs(sys, k: int = 6, tol: float = 1e-8, seed: int = 0, **kw) -> Spectrum:
    """Smallest eigenpairs of the field-road operator relative to the L mass."""
    return generalized_eigenpairs(sys.B, sys.Lmass, k, tol=tol, seed=seed, **kw)


def dirichlet_operators(mesh, a: float = 1.0):
    """Field-only pencil ``(a A, M)`` on interior vertices (zero on the boundary)."""
    if not a > 0:
        raise DomainError("diffusivity must be positive")
    A, M = assemble_field(mesh)
    free = np.nonzero(~mesh.on_boundary)[0]
    if len(free) == 0:
        raise DomainError("mesh has no interior vertices")
    return (a * A[free][:, free]).tocsr(), M[free][:, free].tocsr(), free


def dirichlet_gamma(mesh, a: float = 1.0, k: int = 1, tol: float = 1e-10, seed: int = 0) -> np.ndarray:
    """Smallest Dirichlet eigenvalues of ``-a Laplacian`` on the meshed domain."""
    Aa, M, _ = dirichlet_operators(mesh, a)
    return generalized_eigenpairs(Aa, M, k, tol=tol, seed=seed).eigenvalues


def dense_reference_eigen(sys, cap: int = 400, cluster_rtol: float = 1e-8) -> Spectrum:
    """Full spectrum through LAPACK's dense symmetric-definite solver."""
    n = sys.B.shape[0]
    if n > cap:
        raise DomainError(f"{n} dofs exceeds the dense cap of {cap}")
    Bd = sys.B.toarray()
    Ld = sys.Lmass.toarray()
    lam, X = sla.eigh(Bd, Ld)
    res = _residuals(sys.B, sys.Lmass, X, lam)
    return Spectrum(lam, X, res, _clusters(lam, cluster_rtol), 0)


@dataclass(frozen=True)
class OrthonormalityReport:
    l_gram: float
    b_gram: float
    b_gram_relative: float


def check_orthonormality(spec: Spectrum, sys) -> OrthonormalityReport:
    """Deviation of the L-Gram matrix from I and of the B-Gram from diag(lam).

    ``b_gram_relative`` scales entry (k, h) by ``max(lam_k, lam_h)``.
    """
    X = spec.eigenvectors
    lam = spec.eigenvalues
    GL = X.T @ (sys.Lmass @ X)
    GB = X.T @ (sys.B @ X)
    dl = np.abs(GL - np.eye(len(lam)))
    db = np.abs(GB - np.diag(lam))
    scale = np.maximum(lam[:, None], lam[None, :])
    return OrthonormalityReport(float(dl.max()), float(db.max()), float((db / scale).max()))


def eigenvector_deviation(spec: Spectrum, reference: Spectrum, L, cluster_rtol: float = 1e-6) -> np.ndarray:
    """L-norm distance of each computed eigenvector to its reference eigenspace.

    The eigenspace of reference value ``r`` gathers all reference vectors
    whose eigenvalues lie within ``cluster_rtol`` of it, so sign flips and
    rotations inside degenerate clusters do not count as errors.
    """
    ref_vals = reference.eigenvalues
    V = reference.eigenvectors
    out = np.empty(len(spec))
    for i, (lam, x) in enumerate(zip(spec.eigenvalues, spec.eigenvectors.T)):
        j = int(np.argmin(np.abs(ref_vals - lam)))
        sel = np.abs(ref_vals - ref_vals[j]) <= cluster_rtol * abs(ref_vals[j])
        C = V[:, sel]
        proj = C @ (C.T @ (L @ x))
        d = x - proj
        out[i] = np.sqrt(max(float(d @ (L @ d)), 0.0))
    return out


def rayleigh_quotient(sys, x) -> float:
    x = np.asarray(x, float)
    return float(x @ (sys.B @ x)) / float(x @ (sys.Lmass @ x))
