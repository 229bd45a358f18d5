"""Dense/sparse matrix handling and the factorization primitives.

Dense matrices are plain C-ordered ``float64`` numpy arrays; sparse matrices are
``scipy.sparse.csr_matrix``. Every factorization densifies its input first: all
SVDs in the pipeline act on operands with at least one small dimension.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, FactorizationError

DEFAULT_RANK_TOL = 1e-10


def is_sparse(M) -> bool:
    return sp.issparse(M)


def as_operand(M):
    """Validate ``M`` and return it as a float64 ndarray or CSR matrix.

    Sparse inputs keep their sparsity (canonical CSR: sorted, no duplicates);
    everything else becomes a 2-D C-ordered array. Non-finite entries are
    rejected.
    """
    if sp.issparse(M):
        out = sp.csr_matrix(M, dtype=np.float64)
        if not out.has_canonical_format:
            out = out.copy()
            out.sum_duplicates()
            out.sort_indices()
        if not np.all(np.isfinite(out.data)):
            raise ValueError("matrix contains non-finite entries")
        return out
    out = np.asarray(M, dtype=np.float64)
    if out.ndim == 1:
        out = out.reshape(-1, 1)
    if out.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={out.ndim}")
    if not np.all(np.isfinite(out)):
        raise ValueError("matrix contains non-finite entries")
    return np.ascontiguousarray(out)


def as_dense(M) -> np.ndarray:
    M = as_operand(M)
    if sp.issparse(M):
        return M.toarray()
    return M


def nnz(M) -> int:
    if sp.issparse(M):
        return int(M.nnz)
    return int(np.count_nonzero(M))


def hstack(A, B):
    """``[A, B]``, sparse if either block is sparse."""
    if sp.issparse(A) or sp.issparse(B):
        return sp.hstack([sp.csr_matrix(A), sp.csr_matrix(B)], format="csr")
    return np.hstack([A, B])


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``M = U diag(s) V^T`` with nonincreasing ``s``."""

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray

    def rank(self, rank_tol: float = DEFAULT_RANK_TOL) -> int:
        return numerical_rank(self.s, rank_tol)

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.s) @ self.V.T


def numerical_rank(s: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.count_nonzero(s > rank_tol * s[0]))


def svd(M) -> SvdFactors:
    M = as_dense(M)
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(M.shape) from exc
    return SvdFactors(U, s, Vt.T)


def pseudoinverse(M, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse; singular values below ``rank_tol * s_max``
    are treated as zero."""
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    f = svd(M)
    r = f.rank(rank_tol)
    return (f.V[:, :r] / f.s[:r]) @ f.U[:, :r].T


def orthonormal_basis(M, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column span of ``M`` (``rows x rank``)."""
    f = svd(M)
    return f.U[:, : f.rank(rank_tol)]


def best_rank_k(M, k: int) -> np.ndarray:
    M = as_dense(M)
    if not 0 <= k <= min(M.shape):
        raise DimensionError(f"k={k} outside [0, {min(M.shape)}]")
    f = svd(M)
    return (f.U[:, :k] * f.s[:k]) @ f.V[:, :k].T


def frobenius_distance(M, N) -> float:
    M = as_dense(M)
    N = as_dense(N)
    if M.shape != N.shape:
        raise DimensionError(f"shape mismatch: {M.shape} vs {N.shape}")
    return float(np.linalg.norm(M - N))
