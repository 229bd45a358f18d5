"""Synthetic instances and CSV ingestion."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import IngestionError
from .matrix_core import as_dense, as_operand

B_SCALE = 3.0


@dataclass
class Instance:
    A: object
    B: object
    label: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = as_operand(self.A)
        self.B = as_operand(self.B)
        if self.A.shape[0] != self.B.shape[0]:
            raise ValueError(f"row mismatch: A {self.A.shape}, B {self.B.shape}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.A.shape[0], self.A.shape[1], self.B.shape[1])


def _identity_prefix(m: int, n: int, sparse: bool) -> Instance:
    A = sp.eye(m, n, format="csr") if sparse else np.eye(m, n)
    B = sp.csr_matrix(([B_SCALE], ([n], [0])), shape=(m, 1)) if sparse else np.zeros((m, 1))
    if not sparse:
        B[n, 0] = B_SCALE
    return A, B


def gen_toy() -> Instance:
    """3x2 ``A`` with unit ``A11, A22``; ``B3 = 3``. TLS cost 1, LS cost 9."""
    A, B = _identity_prefix(3, 2, sparse=True)
    return Instance(A, B, "toy")


def gen_toy_appendix(m: int = 10, n: int = 5) -> Instance:
    """``m x n`` identity prefix with ``B_{n+1} = 3``."""
    if m < n + 1:
        raise ValueError("need m >= n + 1")
    A, B = _identity_prefix(m, n, sparse=True)
    return Instance(A, B, "toy-appendix", {"m": m, "n": n})


def gen_small_gaussian(seed: int = 0, m: int = 10, n: int = 5) -> Instance:
    """Standard-normal ``A`` with a response of standard deviation 3."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    B = B_SCALE * rng.standard_normal((m, 1))
    return Instance(A, B, "small-gaussian", {"seed": seed, "m": m, "n": n})


def gen_identity_family(k: int, rows: int | None = None, sparse: bool = True) -> Instance:
    """``20k x 2k`` sparse unit-diagonal ``A`` with ``B_{2k+1} = 3``.

    ``rows`` pads the instance with zero rows (the exact costs are unchanged).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    m = rows if rows is not None else 20 * k
    if m < 20 * k:
        raise ValueError("rows cannot drop below 20k")
    A, B = _identity_prefix(m, 2 * k, sparse)
    return Instance(A, B, "identity", {"k": k, "rows": m})


def gen_gaussian_family(k: int, seed: int = 0) -> Instance:
    """Dense ``20k x 2k`` standard-normal ``A``; ``B`` with standard deviation 3."""
    if k < 1:
        raise ValueError("k must be at least 1")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((20 * k, 2 * k))
    B = B_SCALE * rng.standard_normal((20 * k, 1))
    return Instance(A, B, "gaussian", {"k": k, "seed": seed})


FAMILIES = {
    "toy": lambda k, seed: gen_toy(),
    "toy-appendix": lambda k, seed: gen_toy_appendix(),
    "small-gaussian": lambda k, seed: gen_small_gaussian(seed),
    "identity": lambda k, seed: gen_identity_family(k),
    "gaussian": lambda k, seed: gen_gaussian_family(k, seed),
}


def generate(family: str, k: int = 5, seed: int = 0) -> Instance:
    try:
        make = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}") from None
    return make(k, seed)


# -- CSV -------------------------------------------------------------------------

def _parse_cell(text: str, row: int, col: int) -> float:
    cell = text.strip()
    if not cell:
        raise IngestionError("missing value", row, col)
    try:
        value = float(cell)
    except ValueError:
        raise IngestionError(f"non-numeric cell {cell!r}", row, col) from None
    if not np.isfinite(value):
        raise IngestionError(f"non-finite cell {cell!r}", row, col)
    return value


def _looks_numeric(cells: list[str]) -> bool:
    try:
        [float(c) for c in cells]
    except ValueError:
        return False
    return True


def load_csv(path, n_predictors: int | None = None, delimiter: str = ",",
             header: bool | None = None, response_cols=None) -> Instance:
    """Read a numeric table and split it into ``A`` and ``B``.

    Predictors are the first ``n_predictors`` columns unless ``response_cols``
    names the response columns explicitly (0-based); everything else is a
    predictor. Lines starting with ``#`` are skipped. ``header=None`` detects
    a non-numeric first row. Row and column numbers in errors are 1-based and
    refer to the file.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    rows: list[tuple[int, list[str]]] = []
    for lineno, cells in enumerate(csv.reader(io.StringIO(text), delimiter=delimiter), 1):
        if not cells or (len(cells) == 1 and not cells[0].strip()):
            continue
        if cells[0].lstrip().startswith("#"):
            continue
        rows.append((lineno, cells))
    if header is None:
        header = bool(rows) and not _looks_numeric(rows[0][1])
    if header and rows:
        rows = rows[1:]
    if not rows:
        raise IngestionError(f"{path} has no data rows")
    width = len(rows[0][1])
    values = np.empty((len(rows), width))
    for r, (lineno, cells) in enumerate(rows):
        if len(cells) != width:
            raise IngestionError(f"ragged row: {len(cells)} cells, expected {width}",
                                 lineno, len(cells))
        for c, cell in enumerate(cells):
            values[r, c] = _parse_cell(cell, lineno, c + 1)

    if response_cols is not None:
        resp = sorted(set(int(c) for c in response_cols))
        if not resp or resp[0] < 0 or resp[-1] >= width or len(resp) == width:
            raise IngestionError(f"response columns {resp} invalid for {width} columns")
        pred = [c for c in range(width) if c not in resp]
    else:
        if n_predictors is None or not 1 <= n_predictors < width:
            raise IngestionError(
                f"n_predictors={n_predictors} must lie in [1, {width - 1}] for {width} columns"
            )
        pred, resp = list(range(n_predictors)), list(range(n_predictors, width))
    return Instance(values[:, pred], values[:, resp], path.stem,
                    {"path": str(path), "n_predictors": len(pred)})


def format_instance(instance: Instance) -> str:
    """Shape comment line, then the rows of ``[A, B]`` with round-trip floats."""
    A, B = as_dense(instance.A), as_dense(instance.B)
    m, n, d = instance.shape
    lines = [f"# shape {m} {n} {d}"]
    for row in np.hstack([A, B]):
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_instance(instance: Instance, path) -> None:
    Path(path).write_text(format_instance(instance), encoding="utf-8")


def read_instance(path) -> Instance:
    """Inverse of :func:`write_instance`; uses the shape line for the split."""
    path = Path(path)
    try:
        first = path.read_text(encoding="utf-8").split("\n", 1)[0].split()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if len(first) != 5 or first[:2] != ["#", "shape"]:
        raise IngestionError("missing shape line", 1, 1)
    m, n, d = (int(v) for v in first[2:])
    inst = load_csv(path, n_predictors=n, header=False)
    if inst.shape != (m, n, d):
        raise IngestionError(f"shape line says {(m, n, d)}, data has {inst.shape}")
    return inst
