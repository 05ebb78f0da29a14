"""Benchmark runs, sweeps and their CSV outputs."""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .fem import SpacePair
from .mesh import mesh_size, write_vtk
from .problems import (
    ProblemSpec,
    manufactured_problem,
    pressure_l2_error,
    velocity_h1_error,
)
from .solvers import SolverConfig, SolveResult, Status, solve

TRACE_COLUMNS = (
    "k", "res_tilde_hat", "res_tilde_u", "theta", "sum_abs_alpha",
    "t_picard", "t_anderson", "t_newton",
)
SUMMARY_COLUMNS = (
    "problem", "n", "re", "method", "m", "beta", "tol", "result", "status",
    "iterations", "final_residual", "median_theta", "mean_t_picard",
    "mean_t_anderson", "mean_t_newton", "total_time", "velocity_dofs", "pressure_dofs",
)
EXIT_CODES = {
    Status.CONVERGED: 0,
    Status.MAX_ITERATIONS: 2,
    Status.BLOWUP: 3,
    Status.LINEAR_SOLVE_FAILED: 4,
}


def fmt(value) -> str:
    """Full-precision text for CSV cells."""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def status_code(result: SolveResult) -> str:
    """Iteration count if converged, 'F' for no convergence, 'B' for blow-up."""
    if result.status is Status.CONVERGED:
        return str(result.iterations)
    if result.status is Status.MAX_ITERATIONS:
        return "F"
    return "B"


@dataclass
class RunRecord:
    spec: ProblemSpec
    config: SolverConfig
    result: SolveResult
    total_time: float
    space: SpacePair = field(repr=False)

    @property
    def velocity_dofs(self) -> int:
        return self.space.num_velocity_dofs

    @property
    def pressure_dofs(self) -> int:
        return self.space.num_pressure_dofs

    @property
    def median_theta(self) -> float:
        thetas = [r.theta for r in self.result.trace if r.window > 0]
        return float(np.median(thetas)) if thetas else math.nan

    def mean_time(self, step: str) -> float:
        col = self.result.trace.column(f"t_{step}")
        return float(col.mean()) if len(col) else math.nan

    def summary(self) -> dict:
        c = self.config
        return {
            "problem": self.spec.problem,
            "n": self.spec.n,
            "re": c.reynolds,
            "method": c.method.value,
            "m": c.m,
            "beta": c.beta,
            "tol": c.tol,
            "result": status_code(self.result),
            "status": self.result.status.value,
            "iterations": self.result.iterations,
            "final_residual": self.result.final_residual,
            "median_theta": self.median_theta,
            "mean_t_picard": self.mean_time("picard"),
            "mean_t_anderson": self.mean_time("anderson"),
            "mean_t_newton": self.mean_time("newton"),
            "total_time": self.total_time,
            "velocity_dofs": self.velocity_dofs,
            "pressure_dofs": self.pressure_dofs,
        }


def run(spec: ProblemSpec, config: SolverConfig) -> RunRecord:
    t0 = time.perf_counter()
    problem = spec.build()
    result = solve(config, problem)
    return RunRecord(spec, config, result, time.perf_counter() - t0, problem.space)


def write_trace(result: SolveResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in result.trace:
            w.writerow([fmt(getattr(r, c)) for c in TRACE_COLUMNS])


def export_fields(record: RunRecord, path) -> None:
    """Vertex velocity and pressure as legacy VTK (P1 sub-lattice sampling)."""
    mesh = record.space.mesh
    data = {"velocity": record.result.velocity.reshape(-1, 2)[: mesh.num_vertices]}
    if record.result.pressure is not None:
        data["pressure"] = record.result.pressure
    write_vtk(mesh, path, data)


def run_cavity(re_number: float, n: int, config_kwargs: dict, out=None, export=None) -> RunRecord:
    """Single cavity run with optional per-iteration CSV and field export."""
    config = SolverConfig.from_reynolds(re_number, **config_kwargs)
    record = run(ProblemSpec("cavity", n, config.nu), config)
    if out:
        write_trace(record.result, out)
    if export:
        export_fields(record, export)
    return record


# ---------------------------------------------------------------- sweeps

class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class SweepRow:
    re: float
    method: str
    m: int
    beta: float
    n: int
    tol: float = 1e-10
    max_iterations: int = 100
    problem: str = "cavity"

    def config(self) -> SolverConfig:
        return SolverConfig.from_reynolds(
            self.re, method=self.method, m=self.m, beta=self.beta,
            tol=self.tol, max_iterations=self.max_iterations,
        )

    def spec(self) -> ProblemSpec:
        return ProblemSpec(self.problem, self.n, 1.0 / self.re)


_ALIASES = {"max_iters": "max_iterations", "max-iters": "max_iterations", "Re": "re"}
_CASTS = {"re": float, "method": str, "m": int, "beta": float, "n": int, "tol": float,
          "max_iterations": int, "problem": str}


def _make_row(raw: dict, where: str) -> SweepRow:
    values = {}
    for key, val in raw.items():
        key = _ALIASES.get(key, key).lower()
        if key not in _CASTS:
            raise ManifestError(f"{where}: unknown column {key!r}")
        try:
            values[key] = _CASTS[key](val)
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"{where}: bad value {val!r} for {key}") from exc
    missing = {"re", "method", "m", "beta", "n"} - values.keys()
    if missing:
        raise ManifestError(f"{where}: missing {sorted(missing)}")
    row = SweepRow(**values)
    try:
        row.config()
        row.spec()
    except ValueError as exc:
        raise ManifestError(f"{where}: {exc}") from exc
    return row


def parse_manifest(text: str) -> list[SweepRow]:
    """Rows from JSON (list of objects, or ``{"runs": [...]}``) or a text table.

    Text tables have a header line naming the columns and are separated by
    commas or whitespace; ``#`` starts a comment.
    """
    stripped = text.strip()
    if stripped.startswith(("[", "{")):
        data = json.loads(stripped)
        if isinstance(data, dict):
            data = data.get("runs", [])
        return [_make_row(r, f"run {i}") for i, r in enumerate(data)]
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        return []
    split = (lambda s: [t.strip() for t in s.split(",")]) if "," in lines[0] else str.split
    header = split(lines[0])
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        cells = split(line)
        if len(cells) != len(header):
            raise ManifestError(f"line {i}: expected {len(header)} cells, got {len(cells)}")
        rows.append(_make_row(dict(zip(header, cells)), f"line {i}"))
    return rows


def _run_row(row: SweepRow) -> dict:
    try:
        rec = run(row.spec(), row.config())
        out = rec.summary()
    except Exception as exc:  # a failing row must not stop the sweep
        out = {"problem": row.problem, "n": row.n, "re": row.re, "method": row.method,
               "m": row.m, "beta": row.beta, "tol": row.tol, "result": "B",
               "status": f"error: {exc}"}
    return out


def run_sweep(rows: Iterable[SweepRow], out, jobs: int = 1) -> list[dict]:
    """Run every manifest row, appending one summary line per finished run."""
    rows = list(rows)
    results: list[dict] = []
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=("row",) + SUMMARY_COLUMNS, restval="")
        writer.writeheader()
        fh.flush()

        def emit(i, summary):
            summary = {"row": i, **summary}
            writer.writerow({k: fmt(v) for k, v in summary.items()})
            fh.flush()
            results.append(summary)

        if jobs <= 1:
            for i, row in enumerate(rows):
                emit(i, _run_row(row))
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = {pool.submit(_run_row, row): i for i, row in enumerate(rows)}
                for fut in as_completed(futures):
                    emit(futures[fut], fut.result())
    return results


# ---------------------------------------------------------- manufactured

@dataclass
class ErrorRow:
    n: int
    h: float
    h1_error: float
    l2_pressure_error: float
    iterations: int
    status: str
    h1_order: float = math.nan
    l2_pressure_order: float = math.nan


def run_manufactured(ns: Iterable[int], nu: float = 1.0, method: str = "pn",
                     tol: float = 1e-10, max_iterations: int = 100) -> list[ErrorRow]:
    """Solve the manufactured problem on each mesh and report errors and rates."""
    rows: list[ErrorRow] = []
    config = SolverConfig(nu=nu, method=method, tol=tol, max_iterations=max_iterations)
    for n in ns:
        problem = manufactured_problem(n, nu)
        result = solve(config, problem)
        space = problem.space
        rows.append(ErrorRow(
            n=n,
            h=mesh_size(space.mesh),
            h1_error=velocity_h1_error(space, result.velocity),
            l2_pressure_error=pressure_l2_error(space, result.pressure),
            iterations=result.iterations,
            status=result.status.value,
        ))
    for prev, cur in zip(rows, rows[1:]):
        ratio = math.log(prev.h / cur.h)
        cur.h1_order = math.log(prev.h1_error / cur.h1_error) / ratio
        cur.l2_pressure_order = math.log(prev.l2_pressure_error / cur.l2_pressure_error) / ratio
    return rows


def write_error_table(rows: list[ErrorRow], path) -> None:
    cols = ("n", "h", "h1_error", "h1_order", "l2_pressure_error", "l2_pressure_order",
            "iterations", "status")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([fmt(getattr(r, c)) for c in cols])
