"""Exact least squares and closed-form total least squares.

Costs are squared Frobenius norms throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, DimensionError, FactorizationError
from .matrix_core import DEFAULT_RANK_TOL, as_dense, as_operand, hstack

UNIQUE = "unique"
NON_UNIQUE = "non-unique"
NO_SOLUTION = "no-solution"

SINGULAR_TOL = 1e-10
TIE_TOL = 1e-10
DEPENDENCE_TOL = 1e-8
NOISE_FLOOR = 1e-10
SOLVE_RANK_TOL = 1e-12


@dataclass
class LsSolution:
    X: np.ndarray
    cost: float


@dataclass
class TlsSolution:
    """Closed-form TLS result.

    ``cost`` is the optimal rank-``n`` approximation cost (sum of the trailing
    squared singular values of ``[A, B]``). ``achieved_cost`` is the cost of
    ``[A_hat, A_hat X]`` for the returned ``X``; it exceeds ``cost`` only in
    the no-solution case, by the perturbation repair.
    """

    X: np.ndarray | None
    C_hat: np.ndarray
    cost: float
    case: str
    achieved_cost: float
    singular_values: np.ndarray
    repairs: dict = field(default_factory=dict)


def ls_solve(A, B) -> LsSolution:
    A, B = as_dense(A), as_dense(B)
    if A.shape[0] != B.shape[0]:
        raise DimensionError(f"row mismatch: A {A.shape}, B {B.shape}")
    X = np.linalg.lstsq(A, B, rcond=DEFAULT_RANK_TOL)[0]
    return LsSolution(X, float(np.sum((A @ X - B) ** 2)))


def _check_tls_shapes(A, B):
    if A.shape[0] != B.shape[0]:
        raise DimensionError(f"row mismatch: A {A.shape}, B {B.shape}")
    if A.shape[1] == 0 or B.shape[1] == 0:
        raise DegenerateInputError("TLS needs n >= 1 and d >= 1")


def _spectrum(C: np.ndarray, compute_uv: bool):
    m, c = C.shape
    try:
        if not compute_uv:
            s = np.linalg.svd(C, compute_uv=False)
            return np.concatenate([s, np.zeros(c - s.size)])
        if m >= c:
            U, s, Vt = np.linalg.svd(C, full_matrices=False)
            return U, s, Vt.T
        U, s, Vt = np.linalg.svd(C, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(C.shape) from exc
    s = np.concatenate([s, np.zeros(c - s.size)])
    U = np.hstack([U, np.zeros((m, c - m))])
    return U, s, Vt.T


def tls_cost(A, B) -> float:
    """Squared optimal TLS (rank-``n`` approximation) cost, without ``X``."""
    A, B = as_operand(A), as_operand(B)
    _check_tls_shapes(A, B)
    s = _spectrum(as_dense(hstack(A, B)), compute_uv=False)
    return float(np.sum(s[A.shape[1]:] ** 2))


def _is_singular(M: np.ndarray) -> bool:
    """True unless ``M`` has full row rank."""
    if M.shape[1] < M.shape[0]:
        return True
    s = np.linalg.svd(M, compute_uv=False)
    return s.size == 0 or s[0] == 0.0 or s[-1] < SINGULAR_TOL * s[0]


def _span_residual(v: np.ndarray, Q: np.ndarray) -> np.ndarray:
    if Q.shape[1] == 0:
        return v.copy()
    r = v - Q @ (Q.T @ v)
    return r - Q @ (Q.T @ r)


def _first_dependent(A: np.ndarray, start: int, tol: float, floor: float) -> int | None:
    """First column ``i >= start`` lying in the span of the columns before it.

    The diagonal of an unpivoted QR factor is exactly the residual norm of
    each column against the span of its predecessors.
    """
    R = np.linalg.qr(A, mode="r")
    k = min(R.shape)
    resid = np.zeros(A.shape[1])
    resid[:k] = np.abs(np.diag(R))
    norms = np.linalg.norm(A, axis=0)
    dependent = resid <= np.maximum(tol * norms, floor)
    hits = np.flatnonzero(dependent[start:])
    return int(start + hits[0]) if hits.size else None


def has_dependent_columns(A: np.ndarray, tol: float = DEPENDENCE_TOL) -> bool:
    """True when some column of ``A`` lies in the span of the columns before it."""
    if A.size == 0:
        return A.shape[1] > 0
    norms = np.linalg.norm(A, axis=0)
    return _first_dependent(A, 0, tol, NOISE_FLOOR * norms.max()) is not None


def repair_dependent_columns(A_bar: np.ndarray, B_bar: np.ndarray, perturb: float,
                             tol: float = DEPENDENCE_TOL):
    """Make ``A_bar X = B_bar`` solvable by perturbing dependent columns.

    Columns are scanned left to right; a column is dependent when its residual
    against the span of the columns before it is at most ``tol`` times its
    norm, or at most ``NOISE_FLOOR`` times the largest column norm of the
    system (roundoff-level columns count as zero). A dependent column ``i``
    receives ``perturb * B_bar[:, j]`` for the smallest unused ``j`` whose
    column is independent of the current ``A_bar``. When no such ``j``
    remains, ``B_bar`` already lies in the span and the column is left as is.

    Returns ``(A_repaired, repairs)`` with ``repairs`` mapping column ``i`` to
    the ``B`` column ``j`` it absorbed.
    """
    A = np.array(A_bar, dtype=float, copy=True)
    B_bar = np.asarray(B_bar, dtype=float)
    n, d = A.shape[1], B_bar.shape[1]
    norms = np.linalg.norm(np.hstack([A, B_bar]), axis=0)
    floor = NOISE_FLOOR * (norms.max() if norms.size else 0.0)
    repairs: dict[int, int] = {}
    used: set[int] = set()
    i = 0
    while len(used) < d and (i := _first_dependent(A, i, tol, floor)) is not None:
        span = _column_basis(A, tol, floor)
        for j in range(d):
            if j in used:
                continue
            b = B_bar[:, j]
            rn = np.linalg.norm(_span_residual(b, span))
            if rn > max(tol * np.linalg.norm(b), floor):
                break
        else:
            break
        A[:, i] = A[:, i] + perturb * B_bar[:, j]
        used.add(j)
        repairs[i] = j
        i += 1
        if i >= n:
            break
    return A, repairs


def _column_basis(M: np.ndarray, tol: float, floor: float = 0.0) -> np.ndarray:
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros((M.shape[0], 0))
    return U[:, s > max(tol * s[0], floor)]


def solve_exact_system(A_bar: np.ndarray, B_bar: np.ndarray) -> np.ndarray:
    """Minimum-norm solution of a (consistent) system ``A_bar X = B_bar``."""
    return np.linalg.lstsq(A_bar, B_bar, rcond=SOLVE_RANK_TOL)[0]


def tls_solve(A, B, perturb_delta: float = 1e-8) -> TlsSolution:
    """Closed-form TLS of ``A X ~ B`` via the SVD of ``C = [A, B]``.

    * unique: ``s_n > s_{n+1}`` and ``V22`` nonsingular, ``X = -V12 V22^{-1}``;
    * non-unique: tie at ``s_{n+1}`` with the trailing block ``V_p`` of full
      row rank; the minimum-norm ``X`` is built from the part of the tied
      subspace orthogonal to ``null(V_p)``;
    * no-solution: ``A_hat X = B_hat`` is inconsistent; dependent columns of
      ``A_hat`` are perturbed by ``perturb_delta`` multiples of ``B_hat``
      columns and the resulting exact solution is returned.
    """
    if perturb_delta <= 0:
        raise ValueError("perturb_delta must be positive")
    A, B = as_operand(A), as_operand(B)
    _check_tls_shapes(A, B)
    n, d = A.shape[1], B.shape[1]
    C = as_dense(hstack(A, B))
    U, s, V = _spectrum(C, compute_uv=True)
    cost = float(np.sum(s[n:] ** 2))
    tol = TIE_TOL * s[0] if s[0] > 0 else 0.0

    tie = s[n - 1] - s[n] <= tol
    if not tie:
        V22 = V[n:, n:]
        if not _is_singular(V22):
            X = -V[:n, n:] @ np.linalg.inv(V22)
            C_hat = (U[:, :n] * s[:n]) @ V[:, :n].T
            return TlsSolution(X, C_hat, cost, UNIQUE, cost, s)
    else:
        p = int(np.count_nonzero(s[:n] - s[n] > tol))
        q = int(np.count_nonzero(s >= s[n] - tol))
        if not _is_singular(V[n:, p:]):
            Z = _min_norm_frame(V, n, d, p, q)
            if Z is not None:
                Y, Gamma = Z[:n], Z[n:]
                X = -Y @ np.linalg.inv(Gamma)
                C_hat = C - (C @ Z) @ Z.T
                achieved = float(np.sum((C_hat - C) ** 2))
                return TlsSolution(X, C_hat, cost, NON_UNIQUE, achieved, s)

    C_hat = (U[:, :n] * s[:n]) @ V[:, :n].T
    A_hat, repairs = repair_dependent_columns(C_hat[:, :n], C_hat[:, n:], perturb_delta)
    X = solve_exact_system(A_hat, C_hat[:, n:])
    achieved = float(np.sum((A_hat - C[:, :n]) ** 2) + np.sum((A_hat @ X - C[:, n:]) ** 2))
    return TlsSolution(X, C_hat, cost, NO_SOLUTION, achieved, s, repairs)


def _min_norm_frame(V, n, d, p, q):
    """Orthonormal ``(n+d) x d`` frame of a minimizing null space, or None.

    The frame contains every right singular vector strictly below the tie
    (indices ``q:``) and fills the rest from the tied block ``p:q`` with the
    directions whose bottom ``d`` rows are largest.
    """
    F = V[:, q:]
    T = V[:, p:q]
    g = d - F.shape[1]
    if g < 0 or g > T.shape[1]:
        return None
    Fb, Tb = F[n:], T[n:]
    if F.shape[1]:
        P = np.eye(d) - Fb @ np.linalg.pinv(Fb)
        Tb = P @ Tb
    W = np.linalg.svd(Tb, full_matrices=True)[2].T
    G = T @ W[:, :g]
    Z = np.hstack([F, G])
    if _is_singular(Z[n:]):
        return None
    return Z
