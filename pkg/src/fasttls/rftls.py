"""Sketching-accelerated ridge-regularized total least squares.

Minimizes ``||[A_hat, A_hat X] - C||^2 + lam ||U||^2 + lam ||V||^2`` where
``U V`` is a rank-``n`` factorization coupled to ``[A_hat, A_hat X]``. Both
sides of ``C`` are sketched (``S1 C`` and ``C S2^T``), rows of ``C S2^T`` are
leverage sampled, and the small regularized pair problem is solved in closed
form before the same Split / final regression as the unregularized pipeline.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, IrreparableRankError
from .ftls import (
    IRREPARABLE_TOL,
    MODES,
    SKETCH_KINDS,
    FactoredLowRank,
    FtlsDiagnostics,
    SplitResult,
    coupling_gap,
    draw_sketch,
    evaluate,
    split,
)
from .matrix_core import as_operand, hstack
from .rank_constrained import regularized_rank_solve
from .sketch import (
    apply_left,
    build_row_sampler,
    count_apply_work,
    derive_seed,
)
from .tls_exact import has_dependent_columns, solve_exact_system


@dataclass(frozen=True)
class RftlsConfig:
    lam: float = 1.0
    eps: float = 0.5
    delta: float = 1e-3
    mode: str = "theory"
    rho: float = 0.3
    c1: float = 4.0
    c2: float = 4.0
    c3: float = 4.0
    c4: float = 4.0
    seed: int = 0
    sketch_rows: int | None = None
    s1_kind: str = "auto"
    s2_kind: str = "auto"
    s3_kind: str = "auto"
    beta: float = 1.0
    block_rows: int = 1024
    perturb_delta: float | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if min(self.c1, self.c2, self.c3, self.c4) < 1:
            raise ValueError("size constants must be >= 1")
        if self.sketch_rows is not None and self.sketch_rows < 1:
            raise ValueError("sketch_rows must be positive")
        if not {self.s1_kind, self.s2_kind, self.s3_kind} <= set(SKETCH_KINDS):
            raise ValueError(f"sketch kinds must be among {SKETCH_KINDS}")

    def with_seed(self, seed: int) -> "RftlsConfig":
        return replace(self, seed=seed)

    def perturbation(self, m: int, width: int) -> float:
        if self.perturb_delta is not None:
            return self.perturb_delta
        return self.delta / (m * width)


def rftls_sketch_sizes(cfg: RftlsConfig, m: int, n: int, d: int) -> dict:
    """``s1``, ``s3``, ``d1`` count rows of ``C``; ``s2`` counts columns of ``C S2^T``.

    Row counts are capped at ``m`` and ``s2`` at ``n + d``; a capped sketch
    is the identity.
    """
    width = n + d
    if cfg.mode == "density":
        s1 = s3 = d1 = math.ceil(cfg.rho * m)
        s2 = math.ceil(cfg.rho * width)
    else:
        base = n / cfg.eps
        logged = math.ceil(base * math.log(base + 2))
        s1 = math.ceil(cfg.c1 * logged)
        s2 = math.ceil(cfg.c2 * logged)
        s3 = math.ceil(cfg.c3 * logged)
        d1 = math.ceil(cfg.c4 * logged)
    if cfg.sketch_rows is not None:
        s1 = s3 = d1 = cfg.sketch_rows
    return {
        "s1": min(m, s1) if cfg.sketch_rows is None else s1,
        "s2": max(n, min(width, s2)),
        "s3": min(m, s3) if cfg.sketch_rows is None else s3,
        "d1": min(m, d1) if cfg.sketch_rows is None else d1,
    }


@dataclass
class RftlsResult:
    X: np.ndarray
    U_hat: np.ndarray
    V_hat: np.ndarray
    data_fit: float
    penalty: float
    objective: float
    coupling_gap: float
    factors: FactoredLowRank
    split: SplitResult
    diagnostics: FtlsDiagnostics
    extra: dict = field(default_factory=dict)


def rftls_objective(data_fit: float, U_hat, V_hat, lam: float) -> tuple[float, float]:
    """``(penalty, objective)`` recomputed from the factors."""
    penalty = lam * float(np.sum(U_hat**2)) + lam * float(np.sum(V_hat**2))
    return penalty, data_fit + penalty


def rftls_solve(A, B, cfg: RftlsConfig = RftlsConfig()) -> RftlsResult:
    A, B = as_operand(A), as_operand(B)
    if A.shape[0] != B.shape[0]:
        raise DimensionError(f"row mismatch: A {A.shape}, B {B.shape}")
    m, n, d = A.shape[0], A.shape[1], B.shape[1]
    if m < n + 1:
        raise DimensionError(f"need m >= n + 1, got m={m}, n={n}")
    start = time.perf_counter()
    C = hstack(A, B)
    sizes = rftls_sketch_sizes(cfg, m, n, d)
    perturb = cfg.perturbation(m, n + d)
    with count_apply_work() as work:
        S1 = draw_sketch(cfg.s1_kind, sizes["s1"], C, cfg.beta, derive_seed(cfg.seed, "S1"))
        S1C = apply_left(S1, C)
        Ct = as_operand(C.T)
        S2 = draw_sketch(cfg.s2_kind, sizes["s2"], Ct, cfg.beta, derive_seed(cfg.seed, "S2"))
        CS2t = apply_left(S2, Ct).T
        if sp.issparse(C):
            CS2t = sp.csr_matrix(CS2t)  # keeps the row support of C
        D1 = build_row_sampler(CS2t, sizes["d1"], cfg.beta, derive_seed(cfg.seed, "D1"))
        pair = regularized_rank_solve(apply_left(D1, CS2t), S1C, apply_left(D1, C), n, cfg.lam)
        factors = FactoredLowRank(CS2t, pair.Z_R @ pair.Z_S, S1C)
        parts = split(factors, n, perturb, derive_seed(cfg.seed, "S3"), sizes["s3"],
                      cfg.s3_kind, cfg.beta)
    X = solve_exact_system(parts.A_bar, parts.B_bar)
    wall = time.perf_counter() - start

    residual = float(np.linalg.norm(parts.A_bar @ X - parts.B_bar))
    if residual > IRREPARABLE_TOL * max(float(np.linalg.norm(parts.B_bar)), 1.0):
        raise IrreparableRankError(
            f"sketched system left inconsistent after repair (residual {residual:.3g})"
        )
    U_hat = np.asarray(CS2t @ pair.Z_R)
    V_hat = pair.Z_S @ S1C
    fit = evaluate(factors, X, parts.repairs, perturb, C, cfg.block_rows)
    gap = coupling_gap(factors, X, parts.repairs, perturb, cfg.block_rows)
    penalty, objective = rftls_objective(fit, U_hat, V_hat, cfg.lam)
    diag = FtlsDiagnostics(
        method="RFTLS",
        mode=cfg.mode,
        rho=cfg.rho if cfg.mode == "density" else None,
        eps=cfg.eps if cfg.mode == "theory" else None,
        seed=cfg.seed,
        cost=fit,
        wall_time_seconds=wall,
        sketch_sizes=sizes,
        d_large=False,
        repaired_columns=len(parts.repairs),
        rank_deficient=has_dependent_columns(parts.A_bar),
        residual=residual,
        apply_work=work.total,
        extra={"lam": cfg.lam, "objective": objective, "penalty": penalty,
               "coupling_gap": gap, "work_by_op": dict(work.by_op)},
    )
    return RftlsResult(X, U_hat, V_hat, fit, penalty, objective, gap, factors, parts, diag)
