"""Command line: ``fasttls gen`` writes instances, ``fasttls solve`` benchmarks them.

Exit codes: 0 success, 2 argument error, 3 ingestion error, 4 solver error
(any method row that failed on every repeat).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import FORMATTERS, METHODS, MethodSpec, run_benchmark
from .data import FAMILIES, Instance, format_instance, gen_identity_family, generate, load_csv
from .errors import IngestionError
from .ftls import FtlsConfig
from .rftls import RftlsConfig

EXIT_OK, EXIT_ARGS, EXIT_INGEST, EXIT_SOLVER = 0, 2, 3, 4
DEFAULT_RHOS = (0.9, 0.6, 0.3, 0.1)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ARGS)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fasttls", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", help="write a synthetic instance as CSV")
    gen.add_argument("family", choices=sorted(FAMILIES))
    gen.add_argument("--k", type=int, default=5)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--pad-rows", type=int, default=None,
                     help="zero-pad the identity family to this many rows")
    gen.add_argument("--out", type=Path, default=None)

    solve = sub.add_parser("solve", help="run methods on an instance and report costs/times")
    src = solve.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", type=Path)
    src.add_argument("--family", choices=sorted(FAMILIES))
    solve.add_argument("--n-predictors", type=int, default=None)
    solve.add_argument("--k", type=int, default=5, help="family size parameter")
    solve.add_argument("--pad-rows", type=int, default=None)
    solve.add_argument("--delimiter", default=",")
    solve.add_argument("--method", action="append", choices=METHODS,
                       help="repeatable; default tls, ls, ftls")
    solve.add_argument("--rho", type=float, action="append",
                       help="sample density, repeatable; default 0.9 0.6 0.3 0.1")
    solve.add_argument("--eps", type=float, default=None,
                       help="theory-mode accuracy; used when no --rho is given")
    solve.add_argument("--delta", type=float, default=1e-3)
    solve.add_argument("--lambda", dest="lam", type=float, action="append",
                       help="ridge weight for rftls, repeatable; default 1")
    solve.add_argument("--sketch-rows", type=int, default=None)
    solve.add_argument("--repeats", type=int, default=1)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--boost", type=int, default=1)
    solve.add_argument("--format", choices=sorted(FORMATTERS), default="table")
    solve.add_argument("--no-timing", action="store_true",
                       help="omit timings (allows --jobs > 1)")
    solve.add_argument("--jobs", type=int, default=1)
    solve.add_argument("--out", type=Path, default=None)
    return parser


def _family_instance(name: str, k: int, seed: int, pad_rows: int | None) -> Instance:
    if pad_rows is not None:
        if name != "identity":
            raise ValueError("--pad-rows applies to the identity family only")
        return gen_identity_family(k, rows=pad_rows)
    return generate(name, k, seed)


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")


def _method_specs(args) -> list[MethodSpec]:
    kinds = args.method or ["tls", "ls", "ftls"]
    rhos = args.rho or ([] if args.eps is not None else list(DEFAULT_RHOS))
    lams = args.lam or [1.0]
    specs = []
    for kind in dict.fromkeys(kinds):
        if kind in ("tls", "ls"):
            specs.append(MethodSpec(kind))
            continue
        sizes = [{"rho": r} for r in rhos] or [{"eps": args.eps}]
        for size in sizes:
            if kind == "ftls":
                specs.append(MethodSpec(kind, **size))
            else:
                specs.extend(MethodSpec(kind, lam=lam, **size) for lam in lams)
    return specs


def _cmd_gen(args) -> int:
    inst = _family_instance(args.family, args.k, args.seed, args.pad_rows)
    _emit(format_instance(inst), args.out)
    return EXIT_OK


def _cmd_solve(args) -> int:
    if args.input is not None:
        if args.n_predictors is None:
            raise ValueError("--n-predictors is required with --input")
        inst = load_csv(args.input, args.n_predictors, delimiter=args.delimiter)
    else:
        inst = _family_instance(args.family, args.k, args.seed, args.pad_rows)
        if args.n_predictors is not None and args.n_predictors != inst.shape[1]:
            raise ValueError(f"--n-predictors {args.n_predictors} does not match the "
                             f"family's {inst.shape[1]} predictors")
    eps = args.eps if args.eps is not None else 0.5
    ftls_cfg = FtlsConfig(mode="density", eps=eps, delta=args.delta,
                          sketch_rows=args.sketch_rows)
    rftls_cfg = RftlsConfig(mode="density", eps=eps, delta=args.delta,
                            sketch_rows=args.sketch_rows)
    records = run_benchmark(inst, _method_specs(args), repeats=args.repeats, seed=args.seed,
                            ftls_cfg=ftls_cfg, rftls_cfg=rftls_cfg, boost=args.boost,
                            timing=not args.no_timing, jobs=args.jobs)
    _emit(FORMATTERS[args.format](records), args.out)
    for rec in records:
        if rec.error:
            print(f"fasttls: {rec.method} failed: {rec.error}", file=sys.stderr)
    return EXIT_SOLVER if any(rec.error for rec in records) else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        return _cmd_solve(args)
    except IngestionError as exc:
        print(f"fasttls: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except ValueError as exc:
        print(f"fasttls: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
