"""Taylor-Hood P2/P1 spaces on triangle meshes.

Dof ordering is fixed:

* scalar P2 dofs: all mesh vertices first, then one dof per edge midpoint
  (``V + edge_index``);
* velocity dofs are interleaved, ``2 * scalar + component``;
* pressure dofs coincide with mesh vertices.

Local P2 dofs on a triangle are the three vertices followed by the three
edges, edge ``k`` lying opposite vertex ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Literal

import numpy as np

from .mesh import BoundaryTag, Mesh

Kind = Literal["velocity", "pressure"]


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, 3) barycentric
    weights: np.ndarray  # (nq,), sum 1/2
    degree: int

    @property
    def xy(self) -> np.ndarray:
        """Reference coordinates ``(x, y) = (lambda_1, lambda_2)``."""
        return self.points[:, 1:]


def triangle_quadrature(degree: int = 6) -> QuadratureRule:
    """Collapsed Gauss-Legendre rule on the reference triangle.

    Exact for bivariate polynomials of total degree ``degree``.
    """
    npts = (degree + 3) // 2
    g, w = np.polynomial.legendre.leggauss(npts)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    s, t = np.meshgrid(g, g, indexing="ij")
    ws, wt = np.meshgrid(w, w, indexing="ij")
    x = s.ravel()
    y = (t * (1.0 - s)).ravel()
    weights = (ws * wt * (1.0 - s)).ravel()
    points = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(points=points, weights=weights, degree=degree)


_BARY_GRAD = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def evaluate_basis(kind: Kind | str, point) -> tuple[np.ndarray, np.ndarray]:
    """Values and reference gradients of the local Lagrange basis.

    ``point`` holds barycentric coordinates, shape ``(3,)`` or ``(nq, 3)``.
    Returns ``values`` of shape ``(..., nb)`` and ``grads`` of shape
    ``(..., nb, 2)`` with ``nb`` = 3 (P1 / pressure) or 6 (P2 / velocity).
    """
    lam = np.asarray(point, dtype=float)
    single = lam.ndim == 1
    lam = np.atleast_2d(lam)
    nq = lam.shape[0]
    if kind in ("pressure", "P1"):
        values = lam.copy()
        grads = np.broadcast_to(_BARY_GRAD, (nq, 3, 2)).copy()
    elif kind in ("velocity", "P2"):
        values = np.empty((nq, 6))
        grads = np.empty((nq, 6, 2))
        for i in range(3):
            values[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
            grads[:, i] = (4.0 * lam[:, i] - 1.0)[:, None] * _BARY_GRAD[i]
        for k in range(3):
            a, b = (k + 1) % 3, (k + 2) % 3
            values[:, 3 + k] = 4.0 * lam[:, a] * lam[:, b]
            grads[:, 3 + k] = 4.0 * (
                lam[:, a, None] * _BARY_GRAD[b] + lam[:, b, None] * _BARY_GRAD[a]
            )
    else:
        raise ValueError(f"unknown space kind {kind!r}")
    if single:
        return values[0], grads[0]
    return values, grads


@dataclass(frozen=True)
class Field:
    kind: Kind
    values: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite coefficients")


@dataclass(frozen=True, eq=False)
class SpacePair:
    """P2 vector velocity and P1 pressure spaces with Dirichlet data."""

    mesh: Mesh
    dirichlet_dofs: np.ndarray
    dirichlet_values: np.ndarray
    lid_velocity: tuple[float, float] = (1.0, 0.0)
    quadrature: QuadratureRule = field(default_factory=triangle_quadrature)

    @property
    def num_scalar_velocity_dofs(self) -> int:
        return self.mesh.num_vertices + self.mesh.num_edges

    @property
    def num_velocity_dofs(self) -> int:
        return 2 * self.num_scalar_velocity_dofs

    @property
    def num_pressure_dofs(self) -> int:
        return self.mesh.num_vertices

    @cached_property
    def scalar_cell_dofs(self) -> np.ndarray:
        m = self.mesh
        return np.hstack([m.triangles, m.num_vertices + m.triangle_edges])

    @cached_property
    def velocity_cell_dofs(self) -> np.ndarray:
        s = self.scalar_cell_dofs
        return np.stack([2 * s, 2 * s + 1], axis=2).reshape(len(s), 12)

    @property
    def pressure_cell_dofs(self) -> np.ndarray:
        return self.mesh.triangles

    @cached_property
    def scalar_nodes(self) -> np.ndarray:
        return np.vstack([self.mesh.vertices, self.mesh.edge_midpoints()])

    @cached_property
    def free_velocity_dofs(self) -> np.ndarray:
        mask = np.ones(self.num_velocity_dofs, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)

    @cached_property
    def geometry(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-cell ``|det J|`` and ``J^{-1}`` (shape ``(nt, 2, 2)``)."""
        p = self.mesh.vertices[self.mesh.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        return np.abs(np.linalg.det(jac)), np.linalg.inv(jac)

    def physical_points(self, rule: QuadratureRule | None = None) -> np.ndarray:
        """Quadrature points mapped to every cell, shape ``(nt, nq, 2)``."""
        rule = rule or self.quadrature
        p = self.mesh.vertices[self.mesh.triangles]
        return np.einsum("qi,tid->tqd", rule.points, p)

    def tabulate(self, kind: Kind, rule: QuadratureRule | None = None):
        """Basis values ``(nq, nb)``, physical gradients ``(nt, nq, nb, 2)``
        and quadrature weights times ``|det J|`` ``(nt, nq)``."""
        if rule is None or rule is self.quadrature:
            return self._default_tables[kind]
        return self._tabulate(kind, rule)

    @cached_property
    def _default_tables(self):
        return {k: self._tabulate(k, self.quadrature) for k in ("velocity", "pressure")}

    def _tabulate(self, kind: Kind, rule: QuadratureRule):
        values, ref_grads = evaluate_basis(kind, rule.points)
        det, inv = self.geometry
        grads = np.einsum("qbk,tkd->tqbd", ref_grads, inv)
        return values, grads, det[:, None] * rule.weights[None, :]

    @cached_property
    def pressure_mass_weights(self) -> np.ndarray:
        """``int psi_i`` for every P1 basis function."""
        det, _ = self.geometry
        out = np.zeros(self.num_pressure_dofs)
        np.add.at(out, self.mesh.triangles, np.repeat(det[:, None] / 6.0, 3, axis=1))
        return out

    def apply_dirichlet(self, u: np.ndarray) -> np.ndarray:
        out = np.array(u, dtype=float, copy=True)
        out[self.dirichlet_dofs] = self.dirichlet_values
        return out


def build_taylor_hood(mesh: Mesh, lid_velocity=(1.0, 0.0)) -> SpacePair:
    """Taylor-Hood spaces with every boundary velocity dof constrained.

    Lid-tagged nodes take ``lid_velocity``; walls (corners included) take 0.
    Pass ``lid_velocity=(0, 0)`` for homogeneous Dirichlet data.
    """
    nv = mesh.num_vertices
    nodes = np.concatenate([mesh.boundary_vertices, nv + mesh.boundary_edges])
    tags = np.concatenate([mesh.boundary_vertex_tags, mesh.boundary_edge_tags])
    order = np.argsort(nodes)
    nodes, tags = nodes[order], tags[order]
    lid = tags == BoundaryTag.LID
    dofs = np.stack([2 * nodes, 2 * nodes + 1], axis=1).ravel()
    values = np.zeros((len(nodes), 2))
    values[lid] = lid_velocity
    return SpacePair(
        mesh=mesh,
        dirichlet_dofs=dofs,
        dirichlet_values=values.ravel(),
        lid_velocity=tuple(float(v) for v in lid_velocity),
    )


def interpolate(space: SpacePair, kind: Kind, func: Callable, apply_bc: bool = False) -> Field:
    """Nodal interpolant of ``func(x, y)``.

    For velocity, ``func`` returns the pair ``(u_x, u_y)``. With
    ``apply_bc`` the Dirichlet dofs are overwritten by the boundary data.
    """
    if kind == "velocity":
        nodes = space.scalar_nodes
        ux, uy = func(nodes[:, 0], nodes[:, 1])
        values = np.empty(space.num_velocity_dofs)
        values[0::2] = np.broadcast_to(ux, len(nodes))
        values[1::2] = np.broadcast_to(uy, len(nodes))
        if not np.all(np.isfinite(values)):
            raise ValueError("interpolated function is not finite at every node")
        if apply_bc:
            values = space.apply_dirichlet(values)
    elif kind == "pressure":
        nodes = space.mesh.vertices
        values = np.array(np.broadcast_to(func(nodes[:, 0], nodes[:, 1]), len(nodes)), dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("interpolated function is not finite at every node")
    else:
        raise ValueError(f"unknown space kind {kind!r}")
    return Field(kind, values)
