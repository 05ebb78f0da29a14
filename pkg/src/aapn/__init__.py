"""Picard, Newton and Anderson-accelerated Picard-Newton solvers for the
steady incompressible Navier-Stokes equations on Taylor-Hood elements."""

from .mesh import Mesh, build_unit_square_mesh, mesh_size
from .fem import SpacePair, build_taylor_hood, interpolate
from .solvers import (
    Method,
    Problem,
    SolveResult,
    SolverConfig,
    Status,
    estimate_convergence_order,
    solve,
)
from .problems import ProblemSpec, cavity_problem, manufactured_problem

__all__ = [
    "Mesh", "build_unit_square_mesh", "mesh_size", "SpacePair", "build_taylor_hood",
    "interpolate", "Method", "Problem", "SolveResult", "SolverConfig", "Status",
    "estimate_convergence_order", "solve", "ProblemSpec", "cavity_problem",
    "manufactured_problem",
]
