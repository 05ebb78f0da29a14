"""Benchmark problems: lid-driven cavity and a manufactured NSE solution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .fem import SpacePair, build_taylor_hood, triangle_quadrature
from .mesh import build_unit_square_mesh
from .solvers import Problem

ProblemKind = Literal["cavity", "manufactured"]


@dataclass(frozen=True)
class ProblemSpec:
    problem: ProblemKind
    n: int
    nu: float

    def __post_init__(self):
        if self.problem not in ("cavity", "manufactured"):
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.nu > 0:
            raise ValueError("nu must be positive")

    @property
    def reynolds(self) -> float:
        return 1.0 / self.nu

    def build(self) -> Problem:
        if self.problem == "cavity":
            return cavity_problem(self.n)
        return manufactured_problem(self.n, self.nu)


def cavity_problem(n: int) -> Problem:
    """Unit-square cavity, lid velocity (1, 0), f = 0, zero interior initial guess."""
    space = build_taylor_hood(build_unit_square_mesh(n), lid_velocity=(1.0, 0.0))
    return Problem.from_forcing(space, None)


# Manufactured solution: u = curl(psi), psi = g(x) g(y), g(s) = s^2 (1 - s)^2,
# p = cos(pi x) cos(pi y).

def _g(s):
    return s**2 * (1 - s) ** 2


def _g1(s):
    return 2 * s * (1 - s) * (1 - 2 * s)


def _g2(s):
    return 2 * (1 - 6 * s + 6 * s**2)


def _g3(s):
    return 24 * s - 12


def exact_velocity(x, y):
    return _g(x) * _g1(y), -_g1(x) * _g(y)


def exact_velocity_gradient(x, y):
    """Array ``(..., 2, 2)`` with ``[..., c, d] = d u_c / d x_d``."""
    return np.stack(
        [
            np.stack([_g1(x) * _g1(y), _g(x) * _g2(y)], axis=-1),
            np.stack([-_g2(x) * _g(y), -_g1(x) * _g1(y)], axis=-1),
        ],
        axis=-2,
    )


def exact_pressure(x, y):
    return np.cos(np.pi * x) * np.cos(np.pi * y)


def manufactured_forcing(nu: float):
    """``f = -nu lap u + (u . grad) u + grad p`` in closed form."""

    def forcing(x, y):
        u1, u2 = exact_velocity(x, y)
        lap1 = _g2(x) * _g1(y) + _g(x) * _g3(y)
        lap2 = -(_g3(x) * _g(y) + _g1(x) * _g2(y))
        grad = exact_velocity_gradient(x, y)
        conv1 = u1 * grad[..., 0, 0] + u2 * grad[..., 0, 1]
        conv2 = u1 * grad[..., 1, 0] + u2 * grad[..., 1, 1]
        px = -np.pi * np.sin(np.pi * x) * np.cos(np.pi * y)
        py = -np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)
        return -nu * lap1 + conv1 + px, -nu * lap2 + conv2 + py

    return forcing


def manufactured_problem(n: int, nu: float) -> Problem:
    space = build_taylor_hood(build_unit_square_mesh(n), lid_velocity=(0.0, 0.0))
    return Problem.from_forcing(space, manufactured_forcing(nu))


def velocity_h1_error(space: SpacePair, u_h: np.ndarray, grad_exact=exact_velocity_gradient,
                      degree: int = 10) -> float:
    """``||grad(u_h - u)||`` by per-cell quadrature against the analytic gradient."""
    rule = triangle_quadrature(degree)
    _, dphi, wdet = space.tabulate("velocity", rule)
    coef = np.asarray(u_h)[space.velocity_cell_dofs].reshape(-1, 6, 2)
    grads = np.einsum("tqbd,tbc->tqcd", dphi, coef)
    pts = space.physical_points(rule)
    diff = grads - grad_exact(pts[..., 0], pts[..., 1])
    return float(np.sqrt(np.einsum("tq,tqcd->", wdet, diff**2)))


def pressure_l2_error(space: SpacePair, p_h: np.ndarray, p_exact=exact_pressure,
                      degree: int = 10) -> float:
    rule = triangle_quadrature(degree)
    psi, _, wdet = space.tabulate("pressure", rule)
    vals = np.einsum("qi,ti->tq", psi, np.asarray(p_h)[space.pressure_cell_dofs])
    pts = space.physical_points(rule)
    diff = vals - p_exact(pts[..., 0], pts[..., 1])
    return float(np.sqrt(np.einsum("tq,tq->", wdet, diff**2)))
