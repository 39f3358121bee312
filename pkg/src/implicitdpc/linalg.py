"""Dense linear-algebra kernels: pseudoinverse, projectors, SPD solves, rank.

Matrices are plain 2-D ``numpy`` float arrays.  :func:`as_matrix` is the single
validation point; everything downstream may assume finite entries.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.linalg import lapack

from .errors import DimensionError, NumericalError, PreconditionError

_EPS = np.finfo(float).eps


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a read-only 2-D float array, rejecting NaN/Inf."""
    arr = np.array(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be nonempty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise PreconditionError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def as_vector(v, name: str = "vector", size: Optional[int] = None) -> np.ndarray:
    arr = np.array(v, dtype=float).reshape(-1)
    if size is not None and arr.size != size:
        raise DimensionError(f"{name} must have {size} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise PreconditionError(f"{name} contains non-finite entries")
    return arr


def _svd(M: np.ndarray):
    try:
        return np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD did not converge for {M.shape[0]}x{M.shape[1]} matrix "
            f"(max |entry| = {np.max(np.abs(M)):.3e})"
        ) from exc


def default_tol(shape, smax: float) -> float:
    """The usual ``max(rows, cols) * sigma_max * eps`` rank cut-off."""
    return max(shape) * smax * _EPS


def singular_values(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    try:
        return np.linalg.svd(M, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge for shape {M.shape}") from exc


def pinv(M, tol: Optional[float] = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values ``<= tol`` are treated as zero.  With ``tol=None`` the
    cut-off is ``max(rows, cols) * sigma_max * eps``.
    """
    M = as_matrix(M)
    U, s, Vt = _svd(M)
    smax = s[0] if s.size else 0.0
    cut = default_tol(M.shape, smax) if tol is None else tol
    keep = s > cut
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vt.T * s_inv) @ U.T


def numerical_rank(M, tol: Optional[float] = None) -> int:
    """Number of singular values above ``tol`` (same default rule as pinv)."""
    M = as_matrix(M)
    s = singular_values(M)
    if s.size == 0 or s[0] == 0.0:
        return 0
    cut = default_tol(M.shape, s[0]) if tol is None else tol
    return int(np.count_nonzero(s > cut))


def solve_spd(H, b) -> np.ndarray:
    """Solve ``H X = b`` for symmetric positive definite ``H`` (Cholesky).

    Raises:
        PreconditionError: if ``H`` is not symmetric.
        NumericalError: if the factorization breaks down; the message names
            the (1-based) leading minor that is not positive.
    """
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DimensionError(f"H must be square, got shape {H.shape}")
    if b.shape[0] != H.shape[0]:
        raise DimensionError(f"b has {b.shape[0]} rows, H has {H.shape[0]}")
    hnorm = np.linalg.norm(H)
    if np.linalg.norm(H - H.T) > 1e-10 * max(hnorm, 1e-300):
        raise PreconditionError("H is not symmetric")
    c, info = lapack.dpotrf(H, lower=True, clean=True)
    if info > 0:
        raise NumericalError(
            f"matrix is not positive definite: Cholesky pivot {info} is not positive"
        )
    if info < 0:
        raise NumericalError(f"dpotrf argument {-info} invalid")
    x, info = lapack.dpotrs(c, b, lower=True)
    if info != 0:
        raise NumericalError(f"dpotrs failed with info={info}")
    return x


def is_positive_definite(H) -> bool:
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        return False
    if not np.allclose(H, H.T, rtol=1e-10, atol=1e-12 * max(np.abs(H).max(), 1.0)):
        return False
    _, info = lapack.dpotrf(H, lower=True)
    return info == 0


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def kernel_projector(M, name: str = "matrix") -> np.ndarray:
    """Orthogonal projector ``I - M^T (M M^T)^{-1} M`` onto ``ker(M)``.

    ``M`` must have full row rank; the complementary projector onto the row
    space is ``I`` minus the result.
    """
    M = np.asarray(M, dtype=float)
    rows, cols = M.shape
    r = numerical_rank(M)
    if r < rows:
        raise PreconditionError(
            f"{name} ({rows}x{cols}) is rank deficient: rank {r} < {rows} rows"
        )
    G = symmetrize(M @ M.T)
    P = np.eye(cols) - M.T @ solve_spd(G, M)
    return symmetrize(P)


def null_space(M, tol: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis (columns) of ``ker(M)``."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    U, s, Vt = np.linalg.svd(M, full_matrices=True)
    smax = s[0] if s.size else 0.0
    cut = default_tol(M.shape, smax) if tol is None else tol
    r = int(np.count_nonzero(s > cut))
    return Vt[r:].T.copy()


def block_diag_repeat(block, times: int) -> np.ndarray:
    block = np.atleast_2d(np.asarray(block, dtype=float))
    return np.kron(np.eye(times), block)
