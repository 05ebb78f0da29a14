"""Direct saddle-point solves and the Anderson least-squares kernel."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .fem import SpacePair

SOLVE_RTOL = 1e-11


class LinearSolveFailed(RuntimeError):
    """Factorization broke down or the solve missed its residual target."""


class ZeroResidual(ArithmeticError):
    """The current Anderson residual has zero norm; the iteration has converged."""


@dataclass
class SaddleSystem:
    """Full-space blocks of one linearized step.

    ``velocity_operator`` is ``nu K + convection`` over all velocity dofs;
    Dirichlet rows and columns are eliminated inside :func:`solve_saddle`.
    """

    space: SpacePair
    velocity_operator: sp.spmatrix
    coupling: sp.spmatrix
    rhs_momentum: np.ndarray
    rhs_continuity: np.ndarray | None = None
    pinned_pressure: int = 0


@dataclass
class SaddleSolution:
    velocity: np.ndarray
    pressure: np.ndarray
    residual: float = field(default=0.0)


# Symmetric-structure ordering with relaxed pivoting is ~5x faster on these
# systems; the strict-pivoting COLAMD pass is the fallback.
_FACTOR_OPTIONS = (
    dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=1e-3, options=dict(SymmetricMode=True)),
    dict(permc_spec="COLAMD", diag_pivot_thresh=1.0),
)


def _refined_solve(lu, matrix, rhs, steps: int = 3):
    scale = np.linalg.norm(rhs) + np.finfo(float).tiny
    x = lu.solve(rhs)
    rel = np.inf
    for _ in range(steps + 1):
        r = rhs - matrix @ x
        rel = float(np.linalg.norm(r) / scale)
        if not np.isfinite(rel) or rel <= SOLVE_RTOL:
            break
        x = x + lu.solve(r)
    return x, rel


def _reduced_coupling(system: SaddleSystem):
    space = system.space
    keep_p = np.delete(np.arange(space.num_pressure_dofs), system.pinned_pressure)
    b = sp.csr_matrix(system.coupling)[keep_p]
    return keep_p, b


def solve_saddle(system: SaddleSystem) -> SaddleSolution:
    """Solve ``[[A, B^T], [B, 0]] [u; p] = [f; g]`` with Dirichlet lifting.

    One pressure dof is pinned to zero and the result is shifted to zero mean.
    Raises :class:`LinearSolveFailed` on singular factorization or if the
    relative residual stays above ``SOLVE_RTOL`` after refinement.
    """
    space = system.space
    free = space.free_velocity_dofs
    fixed = space.dirichlet_dofs
    u_fixed = space.dirichlet_values
    nf = len(free)

    a = sp.csr_matrix(system.velocity_operator)
    keep_p, b = _reduced_coupling(system)
    a_rows = a[free]
    a_ff = a_rows[:, free]
    b_f = b[:, free].tocsr()

    g = np.zeros(space.num_pressure_dofs) if system.rhs_continuity is None else system.rhs_continuity
    rhs = np.concatenate([
        system.rhs_momentum[free] - a_rows[:, fixed] @ u_fixed,
        g[keep_p] - b[:, fixed] @ u_fixed,
    ])
    matrix = sp.bmat([[a_ff, b_f.T], [b_f, None]], format="csc")
    if not np.all(np.isfinite(matrix.data)) or not np.all(np.isfinite(rhs)):
        raise LinearSolveFailed("non-finite entries in the linear system")

    x, rel = None, np.inf
    for options in _FACTOR_OPTIONS:
        try:
            lu = splu(matrix, **options)
        except RuntimeError:
            continue
        x, rel = _refined_solve(lu, matrix, rhs)
        if rel <= SOLVE_RTOL:
            break
    if not (rel <= SOLVE_RTOL):
        raise LinearSolveFailed(f"relative residual {rel:.3e} exceeds {SOLVE_RTOL:.0e}")

    u = np.empty(space.num_velocity_dofs)
    u[free] = x[:nf]
    u[fixed] = u_fixed
    p = np.zeros(space.num_pressure_dofs)
    p[keep_p] = x[nf:]
    w = space.pressure_mass_weights
    p -= (w @ p) / w.sum()
    return SaddleSolution(u, p, float(rel))


@dataclass
class AndersonResult:
    """Mixing coefficients for the history columns, most recent first.

    Dropped columns get coefficient 0 and ``kept`` False.
    """

    alpha: np.ndarray
    combined: np.ndarray
    theta: float
    kept: np.ndarray
    current_norm: float


def constrained_least_squares(
    gram: sp.spmatrix,
    current: np.ndarray,
    history: list[np.ndarray],
    drop_tol: float = 1e-13,
    max_cond: float = 1e12,
) -> AndersonResult:
    """Minimize ``||(1 - sum a_j) w_0 + sum a_j w_j||_G`` over ``a``.

    Uses the difference columns ``d_j = w_j - w_0`` and the normal equations
    ``(D^T G D) a = -D^T G w_0``. Columns shorter than ``drop_tol * ||w_0||``
    are discarded, then the oldest columns go until the column-scaled normal
    matrix has condition number at most ``max_cond``.
    """
    w0 = np.asarray(current, dtype=float)
    gw0 = gram @ w0
    norm0 = float(np.sqrt(max(w0 @ gw0, 0.0)))
    if norm0 == 0.0:
        raise ZeroResidual("current residual has zero G-norm")
    m = len(history)
    alpha = np.zeros(m)
    kept = np.zeros(m, dtype=bool)
    if m == 0:
        return AndersonResult(alpha, w0.copy(), 1.0, kept, norm0)

    d = np.column_stack([np.asarray(w, dtype=float) - w0 for w in history])
    gd = gram @ d
    normal = d.T @ gd
    col_norms = np.sqrt(np.clip(np.diag(normal), 0.0, None))
    kept = col_norms >= drop_tol * norm0

    while kept.any():
        idx = np.flatnonzero(kept)
        s = col_norms[idx]
        scaled = normal[np.ix_(idx, idx)] / np.outer(s, s)
        if np.linalg.cond(scaled) <= max_cond:
            break
        kept[idx[-1]] = False

    idx = np.flatnonzero(kept)
    if len(idx):
        s = col_norms[idx]
        scaled = normal[np.ix_(idx, idx)] / np.outer(s, s)
        rhs = -(gd[:, idx].T @ w0) / s
        alpha[idx] = np.linalg.solve(scaled, rhs) / s

    combined = w0 + d @ alpha
    theta = float(np.sqrt(max(combined @ (gram @ combined), 0.0))) / norm0
    if theta > 1.0 + 1e-12:
        # only reachable through severe round-off; alpha = 0 is always feasible
        alpha[:] = 0.0
        kept[:] = False
        combined = w0.copy()
        theta = 1.0
    return AndersonResult(alpha, combined, theta, kept, norm0)
