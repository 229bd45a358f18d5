"""Oblivious sketches and leverage-score sampling.

All transforms are immutable and are pure functions of ``(shape, seed)``.
Pipelines derive one seed per transform from a master seed and a label with
:func:`derive_seed`, so every sketch in a run draws from an independent stream.

Application functions return dense arrays and touch each stored nonzero of the
operand a constant number of times (CountSketch, sampling). The amount of work
can be tallied with :func:`count_apply_work`.
"""
from __future__ import annotations

import contextlib
import contextvars
import zlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateInputError, DimensionError
from .matrix_core import DEFAULT_RANK_TOL, as_operand, orthonormal_basis


def derive_seed(seed: int, label: str) -> int:
    """Independent 63-bit seed for the stream named ``label`` under ``seed``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(label.encode())])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


# -- work accounting ---------------------------------------------------------

@dataclass
class WorkCounter:
    total: int = 0
    by_op: dict = field(default_factory=dict)

    def charge(self, op: str, amount: int) -> None:
        self.total += int(amount)
        self.by_op[op] = self.by_op.get(op, 0) + int(amount)


_current_counter: contextvars.ContextVar[WorkCounter | None] = contextvars.ContextVar(
    "fasttls_work_counter", default=None
)


@contextlib.contextmanager
def count_apply_work():
    """Tally the floating-point work of sketch applications inside the block."""
    counter = WorkCounter()
    token = _current_counter.set(counter)
    try:
        yield counter
    finally:
        _current_counter.reset(token)


def _charge(op: str, amount: int) -> None:
    counter = _current_counter.get()
    if counter is not None:
        counter.charge(op, amount)


def _stored_entries(M) -> int:
    return int(M.nnz) if sp.issparse(M) else int(M.size)


GAUSSIAN_BLOCK = 16


# -- transforms ----------------------------------------------------------------

@dataclass(frozen=True)
class CountSketchTransform:
    """``Pi = Phi D``: source index ``i`` goes to row ``buckets[i]`` with sign
    ``signs[i]``."""

    target_rows: int
    source_dim: int
    buckets: np.ndarray
    signs: np.ndarray
    seed: int | None = None

    @classmethod
    def draw(cls, target_rows: int, source_dim: int, seed: int) -> "CountSketchTransform":
        if target_rows < 1 or source_dim < 1:
            raise DimensionError("CountSketch dimensions must be positive")
        rng = np.random.default_rng(seed)
        buckets = rng.integers(0, target_rows, size=source_dim)
        signs = rng.choice(np.array([-1.0, 1.0]), size=source_dim)
        return cls(target_rows, source_dim, buckets, signs, seed)

    @classmethod
    def identity(cls, n: int) -> "CountSketchTransform":
        return cls(n, n, np.arange(n), np.ones(n), None)

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.signs, (self.buckets, np.arange(self.source_dim))),
            shape=(self.target_rows, self.source_dim),
        )


@dataclass(frozen=True)
class GaussianTransform:
    """Dense ``G / sqrt(target_rows)`` with i.i.d. standard normal ``G``.

    Entries are never stored: each block of ``GAUSSIAN_BLOCK`` consecutive
    columns comes from its own counter-based stream keyed by ``seed``, so
    applying the transform to a sparse operand only generates the blocks
    meeting its nonzero rows.
    """

    target_rows: int
    source_dim: int
    seed: int = 0

    @classmethod
    def draw(cls, target_rows: int, source_dim: int, seed: int) -> "GaussianTransform":
        if target_rows < 1 or source_dim < 1:
            raise DimensionError("Gaussian transform dimensions must be positive")
        return cls(target_rows, source_dim, int(seed))

    def _block(self, b: int) -> np.ndarray:
        bitgen = np.random.Philox(key=self.seed, counter=np.array([0, b, 0, 0], np.uint64))
        return np.random.Generator(bitgen).standard_normal((GAUSSIAN_BLOCK, self.target_rows)).T

    def columns(self, idx) -> np.ndarray:
        """Scaled columns ``idx`` as a ``target_rows x len(idx)`` array."""
        idx = np.asarray(idx, dtype=np.int64).ravel()
        if idx.size and (idx.min() < 0 or idx.max() >= self.source_dim):
            raise DimensionError(f"column index outside [0, {self.source_dim})")
        out = np.empty((self.target_rows, idx.size))
        blocks = idx // GAUSSIAN_BLOCK
        for b in np.unique(blocks):
            pos = np.flatnonzero(blocks == b)
            out[:, pos] = self._block(int(b))[:, idx[pos] - b * GAUSSIAN_BLOCK]
        return out / np.sqrt(self.target_rows)

    def matrix(self) -> np.ndarray:
        return self.columns(np.arange(self.source_dim))


@dataclass(frozen=True)
class CombinedTransform:
    """Gaussian applied after a CountSketch: ``outer @ inner``."""

    inner: CountSketchTransform
    outer: GaussianTransform

    def __post_init__(self):
        if self.inner.target_rows != self.outer.source_dim:
            raise DimensionError("inner.target_rows must equal outer.source_dim")

    @property
    def target_rows(self) -> int:
        return self.outer.target_rows

    @property
    def source_dim(self) -> int:
        return self.inner.source_dim

    @classmethod
    def draw(cls, target_rows: int, inner_rows: int, source_dim: int, seed: int):
        inner = CountSketchTransform.draw(inner_rows, source_dim, derive_seed(seed, "inner"))
        outer = GaussianTransform.draw(target_rows, inner_rows, derive_seed(seed, "outer"))
        return cls(inner, outer)

    def matrix(self) -> np.ndarray:
        return np.asarray(self.inner.matrix().T.dot(self.outer.matrix().T)).T


@dataclass(frozen=True)
class LeverageSampler:
    """Row sampling-and-rescaling operator ``R`` (``s x source_dim``).

    Output row ``j`` is input row ``indices[j]`` scaled by
    ``1 / sqrt(q[indices[j]] * s)``.
    """

    source_dim: int
    indices: np.ndarray
    probabilities: np.ndarray
    weights: np.ndarray
    beta: float = 1.0
    seed: int | None = None

    @property
    def sample_count(self) -> int:
        return int(self.indices.size)

    @property
    def target_rows(self) -> int:
        return self.sample_count

    def matrix(self) -> sp.csr_matrix:
        s = self.sample_count
        return sp.csr_matrix(
            (self.weights, (np.arange(s), self.indices)), shape=(s, self.source_dim)
        )


# -- leverage scores -----------------------------------------------------------

def leverage_scores(M, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Normalized leverage scores ``p_i = ||e_i^T U||^2 / rank`` of ``M``'s rows.

    Dense inputs use an SVD basis. Sparse inputs use the Gram route
    ``U = M V diag(w)^{-1/2}`` restricted to nonzero rows, which keeps the cost
    proportional to ``nnz(M)`` times the width; eigenvalues below
    ``max(rank_tol**2, width * eps) * w_max`` are dropped.
    """
    M = as_operand(M)
    if sp.issparse(M):
        if M.nnz == 0 or not np.any(M.data):
            raise DegenerateInputError("leverage scores of a zero matrix")
        G = (M.T @ M).toarray()
        w, V = np.linalg.eigh(G)
        w, V = w[::-1], V[:, ::-1]
        cutoff = max(rank_tol**2, G.shape[0] * np.finfo(float).eps) * w[0]
        r = int(np.count_nonzero(w > cutoff))
        rows = np.flatnonzero(np.diff(M.indptr))
        Ur = M[rows] @ (V[:, :r] / np.sqrt(w[:r]))
        p = np.zeros(M.shape[0])
        p[rows] = np.einsum("ij,ij->i", Ur, Ur) / r
        _charge("leverage", M.nnz * r)
        return p
    if not np.any(M):
        raise DegenerateInputError("leverage scores of a zero matrix")
    U = orthonormal_basis(M, rank_tol)
    return np.einsum("ij,ij->i", U, U) / U.shape[1]


def build_row_sampler(M, s: int, beta: float = 1.0, seed: int = 0,
                      rank_tol: float = DEFAULT_RANK_TOL) -> LeverageSampler:
    """Sample ``s`` rows of ``M`` i.i.d. with ``q_i >= beta * p_i``.

    ``q`` mixes the leverage distribution with the uniform distribution over
    rows of positive leverage; rows with zero leverage are never sampled.
    """
    if s < 1:
        raise ValueError("sample count must be at least 1")
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    p = leverage_scores(M, rank_tol)
    support = p > 0
    q = beta * p + (1.0 - beta) * support / support.sum()
    q = q / q.sum()
    rng = np.random.default_rng(seed)
    idx = rng.choice(q.size, size=s, p=q)
    weights = 1.0 / np.sqrt(q[idx] * s)
    return LeverageSampler(q.size, idx, q, weights, beta, seed)


# -- application -----------------------------------------------------------------

def _check_source(T, M):
    if T.source_dim != M.shape[0]:
        raise DimensionError(
            f"transform acts on {T.source_dim} rows, operand has {M.shape[0]}"
        )


def apply_countsketch_left(S: CountSketchTransform, M) -> np.ndarray:
    M = as_operand(M)
    _check_source(S, M)
    _charge("countsketch", _stored_entries(M))
    out = S.matrix() @ M
    return out.toarray() if sp.issparse(out) else np.asarray(out)


def apply_sampler_left(R: LeverageSampler, M) -> np.ndarray:
    M = as_operand(M)
    _check_source(R, M)
    rows = M[R.indices]
    _charge("sampler", _stored_entries(rows))
    if sp.issparse(rows):
        return rows.multiply(R.weights[:, None]).toarray()
    return rows * R.weights[:, None]


def apply_gaussian_left(G: GaussianTransform, M, block: int = 4096) -> np.ndarray:
    """``G M``; only columns of ``G`` meeting nonzero rows of a sparse ``M`` are drawn."""
    M = as_operand(M)
    _check_source(G, M)
    _charge("gaussian", G.target_rows * _stored_entries(M))
    if sp.issparse(M):
        rows = np.flatnonzero(np.diff(M.indptr))
        if rows.size == 0:
            return np.zeros((G.target_rows, M.shape[1]))
        return np.asarray((M[rows].T @ G.columns(rows).T).T)
    out = np.zeros((G.target_rows, M.shape[1]))
    for start in range(0, M.shape[0], block):
        stop = min(M.shape[0], start + block)
        out += G.columns(np.arange(start, stop)) @ M[start:stop]
    return out


def apply_combined_left(T: CombinedTransform, M) -> np.ndarray:
    return apply_gaussian_left(T.outer, apply_countsketch_left(T.inner, M))


def apply_left(T, M) -> np.ndarray:
    """Apply any transform from this module on the left of ``M``."""
    if isinstance(T, CountSketchTransform):
        return apply_countsketch_left(T, M)
    if isinstance(T, LeverageSampler):
        return apply_sampler_left(T, M)
    if isinstance(T, GaussianTransform):
        return apply_gaussian_left(T, M)
    if isinstance(T, CombinedTransform):
        return apply_combined_left(T, M)
    raise TypeError(f"unsupported transform {type(T).__name__}")


def sample_columns(R: LeverageSampler, M):
    """``M @ R^T``: sampled, rescaled columns; keeps CSR input sparse."""
    M = as_operand(M)
    if R.source_dim != M.shape[1]:
        raise DimensionError(
            f"sampler acts on {R.source_dim} columns, operand has {M.shape[1]}"
        )
    if sp.issparse(M):
        cols = M.tocsc()[:, R.indices]
        _charge("sampler", cols.nnz)
        return sp.csr_matrix(cols.multiply(R.weights[None, :]))
    _charge("sampler", M.shape[0] * R.sample_count)
    return M[:, R.indices] * R.weights[None, :]
