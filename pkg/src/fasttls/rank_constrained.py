"""Closed-form solvers for the small core problems of both pipelines."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .matrix_core import DEFAULT_RANK_TOL, as_dense, svd
from .sketch import CountSketchTransform, apply_countsketch_left


@dataclass(frozen=True)
class RankConstrainedSolution:
    """``Z = left @ right`` with inner dimension at most ``k``.

    ``objective`` is the attained squared residual ``||A - Bf Z Cf||_F^2``.
    """

    left: np.ndarray
    right: np.ndarray
    objective: float

    @property
    def Z(self) -> np.ndarray:
        return self.left @ self.right


@dataclass(frozen=True)
class RegularizedPairSolution:
    """Minimizer of ``||Cf Z_R Z_S Df - Bf||^2 + lam ||Cf Z_R||^2 + lam ||Z_S Df||^2``.

    ``left_factor = Cf @ Z_R`` and ``right_factor = Z_S @ Df``.
    """

    Z_R: np.ndarray
    Z_S: np.ndarray
    left_factor: np.ndarray
    right_factor: np.ndarray
    objective: float


def rank_constrained_solve(A, Bf, Cf, k: int,
                           rank_tol: float = DEFAULT_RANK_TOL) -> RankConstrainedSolution:
    """Minimize ``||A - Bf Z Cf||_F`` over ``Z`` of rank at most ``k``.

    Uses ``Z = Bf^+ (U_B U_B^T A V_C V_C^T)_k Cf^+``. Writing the projected
    matrix as ``U_B K V_C^T`` with ``K = U_B^T A V_C`` reduces the truncation
    to an SVD of the small core ``K``. ``k`` above the attainable rank is
    clamped.
    """
    A, Bf, Cf = as_dense(A), as_dense(Bf), as_dense(Cf)
    if Bf.shape[0] != A.shape[0] or Cf.shape[1] != A.shape[1]:
        raise DimensionError(
            f"non-conformal shapes: A {A.shape}, Bf {Bf.shape}, Cf {Cf.shape}"
        )
    if k < 0:
        raise ValueError("k must be nonnegative")
    fb = svd(Bf)
    fc = svd(Cf)
    rb, rc = fb.rank(rank_tol), fc.rank(rank_tol)
    Ub, sb, Vb = fb.U[:, :rb], fb.s[:rb], fb.V[:, :rb]
    Uc, sc, Vc = fc.U[:, :rc], fc.s[:rc], fc.V[:, :rc]
    if A is Bf:
        K = (sb[:, None] * Vb.T) @ Vc
    else:
        K = Ub.T @ A @ Vc
    fk = svd(K)
    kk = min(k, fk.s.size)
    Uk, sk, Vk = fk.U[:, :kk], fk.s[:kk], fk.V[:, :kk]
    left = (Vb / sb) @ (Uk * sk)
    right = (Vk.T / sc) @ Uc.T
    fitted = (Ub @ (Uk * sk)) @ (Vk.T @ Vc.T)
    objective = float(np.sum((A - fitted) ** 2))
    return RankConstrainedSolution(left, right, objective)


def regularized_rank_solve(Cf, Df, Bf, k: int, lam: float,
                           rank_tol: float = DEFAULT_RANK_TOL) -> RegularizedPairSolution:
    """Exact minimizer of the ridge-regularized rank-``k`` factorization.

    With ``P = Cf Z_R`` ranging over ``colspan(Cf)`` and ``Q = Z_S Df`` over
    ``rowspan(Df)``, and ``min_{PQ=M} ||P||^2 + ||Q||^2 = 2 ||M||_*``, the
    problem becomes ``min_{rank M <= k} ||M - Bt||^2 + 2 lam ||M||_*`` with
    ``Bt = U_C^T Bf V_D``. Its solution soft-thresholds the top ``k`` singular
    values of ``Bt`` by ``lam``; the factors split each kept value evenly.
    """
    Cf, Df, Bf = as_dense(Cf), as_dense(Df), as_dense(Bf)
    if Cf.shape[0] != Bf.shape[0] or Df.shape[1] != Bf.shape[1]:
        raise DimensionError(
            f"non-conformal shapes: Cf {Cf.shape}, Df {Df.shape}, Bf {Bf.shape}"
        )
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if k < 0:
        raise ValueError("k must be nonnegative")
    fc = svd(Cf)
    fd = svd(Df)
    rc, rd = fc.rank(rank_tol), fd.rank(rank_tol)
    Uc, sc, Vc = fc.U[:, :rc], fc.s[:rc], fc.V[:, :rc]
    Ud, sd, Vd = fd.U[:, :rd], fd.s[:rd], fd.V[:, :rd]
    fb = svd(Uc.T @ Bf @ Vd)
    kk = min(k, fb.s.size)
    root = np.sqrt(np.maximum(fb.s[:kk] - lam, 0.0))
    P = fb.U[:, :kk] * root
    Q = root[:, None] * fb.V[:, :kk].T
    Z_R = np.zeros((Cf.shape[1], k))
    Z_S = np.zeros((k, Df.shape[0]))
    Z_R[:, :kk] = (Vc / sc) @ P
    Z_S[:kk, :] = (Q / sd) @ Ud.T
    left = np.zeros((Cf.shape[0], k))
    right = np.zeros((k, Df.shape[1]))
    left[:, :kk] = Uc @ P
    right[:kk, :] = Q @ Vd.T
    objective = regularized_objective(left, right, Bf, lam)
    return RegularizedPairSolution(Z_R, Z_S, left, right, objective)


def regularized_objective(left, right, target, lam: float) -> float:
    return float(
        np.sum((left @ right - target) ** 2)
        + lam * np.sum(left**2)
        + lam * np.sum(right**2)
    )


def ridge_solve(A, Bf, lam: float, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """``argmin_X ||A X - Bf||_F^2 + lam ||X||_F^2``.

    Solved through the SVD of ``A`` (the spectral form of the augmented
    system ``[A; sqrt(lam) I] X = [Bf; 0]``). With ``lam = 0`` this is the
    minimum-norm least-squares solution.
    """
    A, Bf = as_dense(A), as_dense(Bf)
    if A.shape[0] != Bf.shape[0]:
        raise DimensionError(f"row mismatch: A {A.shape}, Bf {Bf.shape}")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    f = svd(A)
    r = f.rank(rank_tol)
    s = f.s[:r]
    filt = s / (s**2 + lam)
    return (f.V[:, :r] * filt) @ (f.U[:, :r].T @ Bf)


def ridge_objective(A, Bf, X, lam: float) -> float:
    A, Bf = as_dense(A), as_dense(Bf)
    return float(np.sum((A @ X - Bf) ** 2) + lam * np.sum(np.asarray(X) ** 2))


def sketched_ridge_solve(A, Bf, lam: float, rows: int, seed: int) -> np.ndarray:
    """Ridge solution of the CountSketch-compressed problem ``(S A, S Bf)``."""
    S = CountSketchTransform.draw(rows, as_dense(A).shape[0], seed)
    return ridge_solve(apply_countsketch_left(S, A), apply_countsketch_left(S, Bf), lam)


def statistical_dimension(A, lam: float, rank_tol: float = DEFAULT_RANK_TOL) -> float:
    """``sum_i 1 / (1 + lam / s_i^2)`` over the nonzero singular values."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    f = svd(A)
    s = f.s[: f.rank(rank_tol)]
    return float(np.sum(1.0 / (1.0 + lam / s**2)))
