"""Benchmark harness: seeded repeats of each method, aggregated per method."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .data import Instance
from .ftls import FtlsConfig, evaluate, ftls_boosted, ftls_solve
from .rftls import RftlsConfig, rftls_solve
from .tls_exact import ls_solve, tls_solve

METHODS = ("tls", "ls", "ftls", "rftls")


@dataclass(frozen=True)
class MethodSpec:
    """A method row. Sketching methods take a density ``rho`` (density mode)
    or, when ``rho`` is None, an accuracy ``eps`` (theory mode)."""

    kind: str
    rho: float | None = None
    lam: float | None = None
    eps: float | None = None

    def __post_init__(self):
        if self.kind not in METHODS:
            raise ValueError(f"unknown method {self.kind!r}")
        if self.kind in ("ftls", "rftls") and self.rho is None and self.eps is None:
            raise ValueError(f"{self.kind} needs a density or eps setting")
        if self.kind == "rftls" and self.lam is None:
            raise ValueError("rftls needs lam")

    @property
    def label(self) -> str:
        if self.kind in ("tls", "ls"):
            return self.kind.upper()
        size = f"{self.rho:g}" if self.rho is not None else f"eps={self.eps:g}"
        if self.kind == "ftls":
            return f"FTLS {size}"
        return f"RFTLS {self.lam:g},{size}"

    def sizing(self) -> dict:
        if self.rho is not None:
            return {"mode": "density", "rho": self.rho}
        return {"mode": "theory", "eps": self.eps}

    def order_key(self):
        rank = METHODS.index(self.kind)
        return (rank, -(self.rho or 0.0), self.eps or 0.0, -(self.lam or 0.0))


@dataclass
class BenchRecord:
    method: str
    cost_mean: float
    cost_std: float
    time_mean: float | None
    time_std: float | None
    repeats: int
    seed: int
    failures: int = 0
    error: str | None = None

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _run_once(spec: MethodSpec, inst: Instance, seed: int, ftls_cfg: FtlsConfig,
              rftls_cfg: RftlsConfig, boost: int):
    """``(cost, seconds)`` of one solve; only the solve itself is timed."""
    start = time.perf_counter()
    if spec.kind == "tls":
        cost = tls_solve(inst.A, inst.B).cost
        return cost, time.perf_counter() - start
    if spec.kind == "ls":
        cost = ls_solve(inst.A, inst.B).cost
        return cost, time.perf_counter() - start
    if spec.kind == "ftls":
        cfg = replace(ftls_cfg, **spec.sizing(), seed=seed, evaluate=False)
        if boost > 1:
            res = ftls_boosted(inst.A, inst.B, cfg, runs=boost)
        else:
            res = ftls_solve(inst.A, inst.B, cfg)
        elapsed = time.perf_counter() - start
        cost = evaluate(res.factors, res.X, res.split.repairs, res.split.perturb_delta,
                        res.C, cfg.block_rows)
        return cost, elapsed
    cfg = replace(rftls_cfg, **spec.sizing(), lam=spec.lam, seed=seed)
    res = rftls_solve(inst.A, inst.B, cfg)
    return res.objective, res.diagnostics.wall_time_seconds


def _aggregate(spec: MethodSpec, outcomes: list, repeats: int, seed: int,
               timed: bool) -> BenchRecord:
    ok = [o for o in outcomes if not isinstance(o, Exception)]
    errors = [o for o in outcomes if isinstance(o, Exception)]
    if not ok:
        first = errors[0]
        return BenchRecord(spec.label, math.nan, math.nan, None, None, repeats, seed,
                           len(errors), f"{type(first).__name__}: {first}")
    costs = np.array([c for c, _ in ok])
    times = np.array([t for _, t in ok])
    deterministic = spec.kind in ("tls", "ls")
    return BenchRecord(
        method=spec.label,
        cost_mean=float(costs.mean()) if not deterministic else float(costs[0]),
        cost_std=0.0 if deterministic else float(costs.std()),
        time_mean=float(times.mean()) if timed else None,
        time_std=float(times.std()) if timed else None,
        repeats=repeats,
        seed=seed,
        failures=len(errors),
        error=None,
    )


def run_benchmark(instance: Instance, methods: list[MethodSpec], repeats: int = 1,
                  seed: int = 0, ftls_cfg: FtlsConfig | None = None,
                  rftls_cfg: RftlsConfig | None = None, boost: int = 1,
                  timing: bool = True, jobs: int = 1) -> list[BenchRecord]:
    """One record per method, ordered TLS, LS, FTLS by descending density, RFTLS.

    Repeat ``r`` uses seed ``seed + r``. With ``repeats >= 3`` every timed run
    is preceded by an untimed warm-up. Repeats run concurrently (``jobs``)
    only when ``timing`` is off. A failed run is recorded, not raised.
    """
    if not methods:
        raise ValueError("at least one method is required")
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    if boost < 1:
        raise ValueError("boost must be at least 1")
    if jobs > 1 and timing:
        raise ValueError("concurrent repeats require timing to be disabled")
    ftls_cfg = ftls_cfg or FtlsConfig(mode="density")
    rftls_cfg = rftls_cfg or RftlsConfig(mode="density")
    warm = timing and repeats >= 3

    records = []
    for spec in sorted(set(methods), key=MethodSpec.order_key):
        def attempt(r, spec=spec):
            try:
                if warm:
                    _run_once(spec, instance, seed + r, ftls_cfg, rftls_cfg, boost)
                return _run_once(spec, instance, seed + r, ftls_cfg, rftls_cfg, boost)
            except Exception as exc:  # reported in the record
                return exc

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(attempt, range(repeats)))
        else:
            outcomes = [attempt(r) for r in range(repeats)]
        records.append(_aggregate(spec, outcomes, repeats, seed, timing))
    return records


# -- output ----------------------------------------------------------------------

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def to_csv(records: list[BenchRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BenchRecord.field_names())
    for rec in records:
        writer.writerow([_cell(v) for v in asdict(rec).values()])
    return buf.getvalue()


def to_json(records: list[BenchRecord]) -> str:
    rows = [{k: _json_value(v) for k, v in asdict(rec).items()} for rec in records]
    return json.dumps(rows, indent=2) + "\n"


def _fmt(value, digits: int) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.{digits}g}"
    return str(value)


def to_table(records: list[BenchRecord]) -> str:
    head = ["Method", "Cost", "C-std", "Time", "T-std", "Runs", "Failed"]
    rows = []
    for rec in records:
        rows.append([rec.method, _fmt(rec.cost_mean, 6), _fmt(rec.cost_std, 3),
                     _fmt(rec.time_mean, 4), _fmt(rec.time_std, 3), str(rec.repeats),
                     str(rec.failures)])
    widths = [max(len(r[i]) for r in rows + [head]) for i in range(len(head))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    for rec in records:
        if rec.error:
            lines.append(f"{rec.method}: {rec.error}")
    return "\n".join(lines) + "\n"


FORMATTERS = {"csv": to_csv, "json": to_json, "table": to_table}
