"""Sparse assembly of the Navier-Stokes bilinear and trilinear forms.

The convection forms use the skew-symmetrized trilinear form

    b*(v, w, z) = (v . grad w, z) + 1/2 ((div v) w, z),

which vanishes whenever its last two arguments coincide and vanish on the
boundary, even for velocities that are only discretely divergence free.

Sign convention: the pressure coupling ``B`` has entries
``B[i, j] = -(psi_i, div phi_j)``. The momentum rows of the saddle-point
system carry ``B^T p = -(p, div v)`` and the continuity rows carry
``B u = -(q, div u)``, so ``p`` is the physical pressure.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .fem import QuadratureRule, SpacePair, triangle_quadrature


class SparsePattern:
    """Fixed CSR structure for repeated assembly from per-cell blocks."""

    def __init__(self, rows: np.ndarray, cols: np.ndarray, shape: tuple[int, int]):
        rows = np.asarray(rows).ravel()
        cols = np.asarray(cols).ravel()
        keys = rows.astype(np.int64) * shape[1] + cols
        uniq, self.scatter = np.unique(keys, return_inverse=True)
        self.shape = shape
        self.indices = (uniq % shape[1]).astype(np.int32)
        urows = uniq // shape[1]
        self.indptr = np.searchsorted(urows, np.arange(shape[0] + 1)).astype(np.int32)
        self.nnz = len(uniq)

    def build(self, values: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.scatter, weights=np.asarray(values).ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


def _block_index(row_dofs: np.ndarray, col_dofs: np.ndarray):
    nr, nc = row_dofs.shape[1], col_dofs.shape[1]
    rows = np.repeat(row_dofs[:, :, None], nc, axis=2)
    cols = np.repeat(col_dofs[:, None, :], nr, axis=1)
    return rows, cols


@lru_cache(maxsize=8)
def _patterns(space: SpacePair) -> dict[str, SparsePattern]:
    nv, npr = space.num_velocity_dofs, space.num_pressure_dofs
    vdofs = space.velocity_cell_dofs
    return {
        "vel": SparsePattern(*_block_index(vdofs, vdofs), (nv, nv)),
        "coupling": SparsePattern(*_block_index(space.pressure_cell_dofs, vdofs), (npr, nv)),
    }


def _velocity_pattern(space: SpacePair) -> SparsePattern:
    return _patterns(space)["vel"]


def _scalar_to_vector_blocks(local: np.ndarray) -> np.ndarray:
    """Expand scalar (nt, 6, 6) blocks to component-diagonal (nt, 12, 12)."""
    nt = local.shape[0]
    out = np.zeros((nt, 6, 2, 6, 2))
    out[:, :, 0, :, 0] = local
    out[:, :, 1, :, 1] = local
    return out.reshape(nt, 12, 12)


def _velocity_at_quadrature(space: SpacePair, a: np.ndarray):
    """Values ``(nt, nq, 2)`` and gradients ``(nt, nq, 2, 2)`` of a P2 field.

    ``grad[..., c, d]`` is the derivative of component ``c`` along ``d``.
    """
    phi, dphi, _ = space.tabulate("velocity")
    coef = np.asarray(a)[space.velocity_cell_dofs].reshape(-1, 6, 2)
    vals = np.einsum("qb,tbc->tqc", phi, coef)
    grads = np.einsum("tqbd,tbc->tqcd", dphi, coef)
    return vals, grads


def assemble_viscous(space: SpacePair, nu: float) -> sp.csr_matrix:
    """``K[i, j] = nu * (grad phi_j, grad phi_i)``."""
    if not nu > 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    _, dphi, wdet = space.tabulate("velocity")
    local = nu * np.einsum("tq,tqad,tqbd->tab", wdet, dphi, dphi)
    return _velocity_pattern(space).build(_scalar_to_vector_blocks(local))


def assemble_h1_gram(space: SpacePair) -> sp.csr_matrix:
    """Gram matrix of the H1 seminorm, ``v^T G w = (grad v, grad w)``."""
    return assemble_viscous(space, 1.0)


def assemble_pressure_coupling(space: SpacePair) -> sp.csr_matrix:
    """``B[i, j] = -(psi_i, div phi_j)``, shape ``(n_pressure, n_velocity)``."""
    psi, _, wdet = space.tabulate("pressure")
    _, dphi, _ = space.tabulate("velocity")
    # div of (phi_b e_c) is d_c phi_b
    local = -np.einsum("tq,qi,tqbc->tibc", wdet, psi, dphi).reshape(-1, 3, 12)
    return _patterns(space)["coupling"].build(local)


def assemble_convection_picard(space: SpacePair, a: np.ndarray) -> sp.csr_matrix:
    """``P(a)[i, j] = b*(a, phi_j, phi_i)``."""
    phi, dphi, wdet = space.tabulate("velocity")
    vals, grads = _velocity_at_quadrature(space, a)
    div = grads[..., 0, 0] + grads[..., 1, 1]
    adv = np.einsum("tqd,tqbd->tqb", vals, dphi) + 0.5 * div[..., None] * phi[None]
    local = np.einsum("tq,qa,tqb->tab", wdet, phi, adv)
    return _velocity_pattern(space).build(_scalar_to_vector_blocks(local))


def assemble_convection_newton(space: SpacePair, a: np.ndarray):
    """Newton linearization of ``b*(u, u, v)`` about ``a``.

    Returns ``(N, r)`` with ``N[i, j] = b*(a, phi_j, phi_i) + b*(phi_j, a, phi_i)``
    and ``r[i] = b*(a, a, phi_i)``, so that the linearized momentum equation
    reads ``(K + N) u - r + B^T p = f``.
    """
    phi, dphi, wdet = space.tabulate("velocity")
    vals, grads = _velocity_at_quadrature(space, a)
    div = grads[..., 0, 0] + grads[..., 1, 1]
    nt = wdet.shape[0]

    adv = np.einsum("tqd,tqbd->tqb", vals, dphi) + 0.5 * div[..., None] * phi[None]
    picard = _scalar_to_vector_blocks(np.einsum("tq,qa,tqb->tab", wdet, phi, adv))

    # b*(phi_b e_d, a, phi_a e_c) = phi_b d_d a_c phi_a + 1/2 d_d phi_b a_c phi_a
    reaction = np.einsum("tq,qa,qb,tqcd->tacbd", wdet, phi, phi, grads)
    reaction += 0.5 * np.einsum("tq,qa,tqbd,tqc->tacbd", wdet, phi, dphi, vals)
    local = picard + reaction.reshape(nt, 12, 12)
    matrix = _velocity_pattern(space).build(local)

    # b*(a, a, phi_a e_c) = (a . grad a_c + 1/2 div(a) a_c) phi_a
    conv = np.einsum("tqd,tqcd->tqc", vals, grads) + 0.5 * div[..., None] * vals
    rhs_local = np.einsum("tq,qa,tqc->tac", wdet, phi, conv).reshape(nt, 12)
    rhs = np.bincount(
        space.velocity_cell_dofs.ravel(), weights=rhs_local.ravel(), minlength=space.num_velocity_dofs
    )
    return matrix, rhs


LOAD_QUADRATURE = triangle_quadrature(12)


def assemble_load(
    space: SpacePair, forcing: Callable | None, rule: QuadratureRule | None = None
) -> np.ndarray:
    """``F[i] = int f . phi_i``; ``forcing(x, y)`` returns ``(f_x, f_y)``.

    Data is not polynomial, so the default rule is finer than the one used
    for the bilinear and trilinear forms.
    """
    nvel = space.num_velocity_dofs
    if forcing is None:
        return np.zeros(nvel)
    if rule is None:
        rule = LOAD_QUADRATURE
    phi, _, wdet = space.tabulate("velocity", rule)
    pts = space.physical_points(rule)
    fx, fy = forcing(pts[..., 0], pts[..., 1])
    fvals = np.stack(np.broadcast_arrays(fx, fy, pts[..., 0])[:2], axis=-1)
    if not np.all(np.isfinite(fvals)):
        raise ValueError("forcing is not finite at every quadrature point")
    local = np.einsum("tq,qa,tqc->tac", wdet, phi, fvals).reshape(-1, 12)
    return np.bincount(space.velocity_cell_dofs.ravel(), weights=local.ravel(), minlength=nvel)


def h1_seminorm(gram: sp.spmatrix, v: np.ndarray) -> float:
    """``sqrt(v^T G v)``; tiny negative round-off is clamped to zero."""
    v = np.asarray(v)
    sq = float(v @ (gram @ v))
    if sq < 0.0:
        if sq < -1e-14:
            raise ValueError(f"Gram form is negative ({sq:.3e}); operator is not PSD")
        return 0.0
    return float(np.sqrt(sq))


def discrete_dual_norm(space: SpacePair, gram: sp.spmatrix, load: np.ndarray) -> float:
    """Discrete H^-1 norm of an assembled load via its Riesz representer.

    Solves ``G r = load`` on the free velocity dofs with homogeneous Dirichlet
    data and returns ``||grad r||``.
    """
    from scipy.sparse.linalg import splu

    free = space.free_velocity_dofs
    if len(free) == 0:
        raise ValueError("no free velocity dofs; Riesz problem is empty")
    rhs = np.asarray(load)[free]
    if not np.any(rhs):
        return 0.0
    try:
        r = splu(sp.csc_matrix(gram[free][:, free])).solve(rhs)
    except RuntimeError as exc:
        raise ValueError("Gram operator is singular on the free dofs") from exc
    return float(np.sqrt(max(float(r @ rhs), 0.0)))
