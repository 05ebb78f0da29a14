"""Command line entry point: ``aapn solve | sweep | manufactured``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench
from .problems import ProblemSpec
from .solvers import Method, SolverConfig, StopResidual

log = logging.getLogger("aapn")


def _solver_args(p: argparse.ArgumentParser) -> None:
    visc = p.add_mutually_exclusive_group()
    visc.add_argument("--re", type=float, help="Reynolds number 1/nu (default 1000)")
    visc.add_argument("--nu", type=float, help="kinematic viscosity")
    p.add_argument("--n", type=int, default=32, help="subdivisions per side (h ~ 1/n)")
    p.add_argument("--method", choices=[m.value for m in Method], default="aapn")
    p.add_argument("--m", type=int, default=1, help="Anderson depth")
    p.add_argument("--beta", type=float, default=1.0, help="relaxation in (0, 1]")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--stop-residual", choices=[s.value for s in StopResidual],
                   default=StopResidual.TILDE_HAT.value)
    p.add_argument("--blowup", type=float, default=1e3, help="residual blow-up threshold")


def _config(args) -> SolverConfig:
    nu = args.nu if args.nu is not None else 1.0 / (args.re if args.re is not None else 1000.0)
    return SolverConfig(
        nu=nu, method=args.method, m=args.m, beta=args.beta, tol=args.tol,
        max_iterations=args.max_iters, stop_residual=args.stop_residual,
        blowup_threshold=args.blowup,
    )


def cmd_solve(args) -> int:
    config = _config(args)
    spec = ProblemSpec(args.problem, args.n, config.nu)
    record = bench.run(spec, config)
    if args.out:
        bench.write_trace(record.result, args.out)
    if args.export_field:
        bench.export_fields(record, args.export_field)
    summary = record.summary()
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(",".join(bench.SUMMARY_COLUMNS) + "\n")
            fh.write(",".join(bench.fmt(summary[c]) for c in bench.SUMMARY_COLUMNS) + "\n")
    for r in record.result.trace:
        print(f"k={r.k:3d}  res={r.res_tilde_hat:.6e}  res_u={r.res_tilde_u:.6e}  "
              f"theta={r.theta:.4f}  |alpha|={r.sum_abs_alpha:.3f}")
    print(f"{summary['status']}: result={summary['result']} iterations={summary['iterations']} "
          f"median_theta={summary['median_theta']:.4f} time={summary['total_time']:.2f}s")
    return bench.EXIT_CODES[record.result.status]


def cmd_sweep(args) -> int:
    rows = bench.parse_manifest(Path(args.manifest).read_text())
    results = bench.run_sweep(rows, args.out, jobs=args.jobs)
    for r in results:
        print(f"row {r['row']}: Re={r['re']:g} {r['method']} m={r['m']} beta={r['beta']:g} "
              f"n={r['n']} -> {r['result']}")
    return 0


def cmd_manufactured(args) -> int:
    rows = bench.run_manufactured(args.n, nu=args.nu, method=args.method, tol=args.tol)
    if args.out:
        bench.write_error_table(rows, args.out)
    print(f"{'n':>4} {'h1 error':>14} {'order':>7} {'p L2 error':>14} {'order':>7}")
    for r in rows:
        print(f"{r.n:4d} {r.h1_error:14.6e} {r.h1_order:7.3f} "
              f"{r.l2_pressure_error:14.6e} {r.l2_pressure_order:7.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aapn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="single run")
    p.add_argument("--problem", choices=["cavity", "manufactured"], default="cavity")
    _solver_args(p)
    p.add_argument("--out", help="per-iteration CSV trace")
    p.add_argument("--summary", help="one-row summary CSV")
    p.add_argument("--export-field", help="legacy VTK file with vertex velocity/pressure")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run every row of a manifest")
    p.add_argument("manifest", help="text table or JSON with re, method, m, beta, n columns")
    p.add_argument("--out", required=True, help="summary CSV, written row by row")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("manufactured", help="discretization error study")
    p.add_argument("--n", type=int, nargs="+", default=[8, 16, 32])
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--method", choices=[m.value for m in Method], default="pn")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_manufactured)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"aapn: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
