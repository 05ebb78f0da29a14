"""Structured triangulations of the unit square with cavity boundary tags."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

TAG_TOL = 1e-12


class BoundaryTag(IntEnum):
    WALL = 0
    LID = 1


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangle mesh.

    ``triangle_edges[t, k]`` is the edge opposite local vertex ``k`` of
    triangle ``t``, i.e. the edge joining local vertices ``k+1`` and ``k+2``
    (mod 3). Boundary tag arrays are parallel to the index arrays.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    triangle_edges: np.ndarray
    boundary_vertices: np.ndarray
    boundary_vertex_tags: np.ndarray
    boundary_edges: np.ndarray
    boundary_edge_tags: np.ndarray

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_midpoints(self) -> np.ndarray:
        return self.vertices[self.edges].mean(axis=1)


def _lid_mask(points: np.ndarray) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    return (np.abs(y - 1.0) <= TAG_TOL) & (x > TAG_TOL) & (x < 1.0 - TAG_TOL)


def mesh_from_triangles(vertices, triangles) -> Mesh:
    """Build edge connectivity and boundary tags for an arbitrary triangle list."""
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    local = np.array([[1, 2], [2, 0], [0, 1]])
    pairs = np.sort(triangles[:, local].reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    triangle_edges = inverse.reshape(-1, 3)

    boundary_edges = np.flatnonzero(counts == 1)
    boundary_vertices = np.unique(edges[boundary_edges])
    mid = vertices[edges[boundary_edges]].mean(axis=1)
    edge_tags = np.where(_lid_mask(mid), BoundaryTag.LID, BoundaryTag.WALL).astype(np.int8)
    vertex_tags = np.where(
        _lid_mask(vertices[boundary_vertices]), BoundaryTag.LID, BoundaryTag.WALL
    ).astype(np.int8)
    return Mesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        triangle_edges=triangle_edges,
        boundary_vertices=boundary_vertices,
        boundary_vertex_tags=vertex_tags,
        boundary_edges=boundary_edges,
        boundary_edge_tags=edge_tags,
    )


def build_unit_square_mesh(n: int) -> Mesh:
    """Uniform ``n x n`` lattice, every cell cut from bottom-left to top-right."""
    if n < 1:
        raise ValueError(f"need at least one subdivision, got n={n}")
    t = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(t, t, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return mesh_from_triangles(vertices, triangles)


def mesh_size(mesh: Mesh) -> float:
    """Longest edge length."""
    d = np.diff(mesh.vertices[mesh.edges], axis=1)[:, 0]
    return float(np.sqrt((d**2).sum(axis=1)).max())


def write_vtk(mesh: Mesh, path, point_data: dict[str, np.ndarray] | None = None) -> None:
    """Write the mesh (and optional vertex data) as a legacy ASCII VTK grid.

    Point data arrays of shape ``(V,)`` are written as scalars, ``(V, 2)`` as
    vectors padded with a zero z-component.
    """
    lines = [
        "# vtk DataFile Version 3.0",
        "aapn mesh",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.num_vertices} double",
    ]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    nt = mesh.num_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    if point_data:
        lines.append(f"POINT_DATA {mesh.num_vertices}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape == (mesh.num_vertices,):
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.17g}" for v in values]
            elif values.shape == (mesh.num_vertices, 2):
                lines.append(f"VECTORS {name} double")
                lines += [f"{a:.17g} {b:.17g} 0" for a, b in values]
            else:
                raise ValueError(f"point data {name!r} has shape {values.shape}")
    Path(path).write_text("\n".join(lines) + "\n")
