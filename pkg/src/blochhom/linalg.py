"""Shared dense / factored linear algebra helpers.

Operator norms are always largest singular values.  Dense SVD is used up to
``DENSE_SVD_LIMIT`` rows; past that the norm of an implicitly defined operator
(e.g. a difference of factored resolvents) is computed with a deterministic
Lanczos run (ARPACK with a fixed start vector).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

# Full SVD stays exact and affordable at desk scale; larger problems switch to
# the matrix-free path.
DENSE_SVD_LIMIT = 2000


def operator_norm(mat: np.ndarray) -> float:
    """Largest singular value of a dense matrix."""
    m = np.ascontiguousarray(mat)
    if m.size == 0:
        return 0.0
    try:
        return float(np.linalg.svd(m, compute_uv=False)[0])
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but robust.
        return float(sla.svd(m, compute_uv=False, lapack_driver="gesvd")[0])


def smallest_singular_value(mat: np.ndarray) -> float:
    m = np.ascontiguousarray(mat)
    if m.size == 0:
        return 0.0
    try:
        return float(np.linalg.svd(m, compute_uv=False)[-1])
    except np.linalg.LinAlgError:
        return float(sla.svd(m, compute_uv=False, lapack_driver="gesvd")[-1])


def hermitian_part(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.conj().T)


def min_real_eig(mat: np.ndarray) -> float:
    """Smallest eigenvalue of the Hermitian part (accretivity margin)."""
    if mat.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(hermitian_part(mat))[0])


def max_real_eig(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(hermitian_part(mat))[-1])


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Haar-ish unitary with a deterministic phase convention."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def orthonormal_complement(basis: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal columns spanning the orthogonal complement of span(basis)."""
    if basis.shape[1] == 0:
        return np.eye(dim, dtype=complex)
    if basis.shape[1] == dim:
        return np.zeros((dim, 0), dtype=complex)
    return sla.null_space(basis.conj().T)


def fit_loglog_slope(x: np.ndarray, y: np.ndarray):
    """Least-squares slope of log y against log x.

    Entries with non-positive y are dropped (exact-zero errors carry no rate
    information).  Returns ``(slope, rms_residual)`` or ``(None, None)`` when
    fewer than two usable points remain.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = y > 0
    if mask.sum() < 2:
        return None, None
    lx, ly = np.log(x[mask]), np.log(y[mask])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return float(slope), float(np.sqrt(np.mean(resid**2)))


def difference_norm(apply_fwd, apply_adj, dim: int, tol: float = 1e-8) -> float:
    """Operator norm of an implicitly given operator on C^dim.

    ``apply_fwd`` / ``apply_adj`` take and return 1-d complex vectors.  The
    start vector is fixed so repeated runs are bit-reproducible; ``tol`` is
    the relative accuracy of the dominant singular value.
    """
    def flat(fun):
        return lambda x: np.asarray(fun(np.asarray(x).reshape(-1))).reshape(-1)

    op = spla.LinearOperator(
        (dim, dim), matvec=flat(apply_fwd), rmatvec=flat(apply_adj),
        dtype=complex,
    )
    v0 = np.full(dim, 1.0 / np.sqrt(dim))
    s = spla.svds(op, k=1, v0=v0, tol=tol, maxiter=400,
                  return_singular_vectors=False)
    return float(s[0])


class FactoredSolver:
    """LU factorisation exposing forward and conjugate-transpose solves."""

    def __init__(self, mat: np.ndarray, overwrite: bool = False):
        self._lu = sla.lu_factor(mat, overwrite_a=overwrite)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self._lu, rhs)

    def solve_adjoint(self, rhs: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self._lu, rhs, trans=2)
