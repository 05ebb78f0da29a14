"""Nonlinear iterations for the discrete steady Navier-Stokes equations.

One outer iteration of the Anderson-accelerated Picard-Newton method is

1. ``u_tilde = g_P(u_k)``: Picard solve, advecting by ``u_k``;
2. ``u_hat``: Anderson mixing of the current and up to ``m`` past Picard
   residuals ``w_j = u_tilde_j - u_{j-1}`` with relaxation ``beta``;
3. ``u_{k+1} = g_N(u_hat)``: Newton solve linearized about ``u_hat``.

Picard is step 1 alone, Newton is step 3 alone (linearized about ``u_k``),
and Picard-Newton is the ``m = 0`` case.
"""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .assembly import (
    assemble_convection_newton,
    assemble_convection_picard,
    assemble_h1_gram,
    assemble_load,
    assemble_pressure_coupling,
    h1_seminorm,
)
from .fem import SpacePair
from .linalg import (
    AndersonResult,
    LinearSolveFailed,
    SaddleSolution,
    SaddleSystem,
    ZeroResidual,
    constrained_least_squares,
    solve_saddle,
)

log = logging.getLogger(__name__)

FORM_GAP_TOL = 1e-12


class Method(str, Enum):
    PICARD = "picard"
    NEWTON = "newton"
    PICARD_NEWTON = "pn"
    AAPN = "aapn"
    PRTX = "prtx"


class Status(str, Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    BLOWUP = "blowup"
    LINEAR_SOLVE_FAILED = "linear_solve_failed"


class StopResidual(str, Enum):
    TILDE_HAT = "tilde-hat"
    TILDE_U = "tilde-u"


@dataclass(frozen=True)
class SolverConfig:
    nu: float
    method: Method = Method.AAPN
    m: int = 0
    beta: float = 1.0
    tol: float = 1e-10
    max_iterations: int = 100
    stop_residual: StopResidual = StopResidual.TILDE_HAT
    blowup_threshold: float = 1e3
    anderson_drop_tol: float = 1e-13
    anderson_max_cond: float = 1e12
    keep_iterates: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "stop_residual", StopResidual(self.stop_residual))
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.m < 0:
            raise ValueError(f"Anderson depth must be >= 0, got {self.m}")
        if not self.tol > 0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    @property
    def reynolds(self) -> float:
        return 1.0 / self.nu

    @classmethod
    def from_reynolds(cls, re: float, **kwargs) -> "SolverConfig":
        return cls(nu=1.0 / re, **kwargs)


@dataclass
class Problem:
    """Discrete problem data shared by every iteration.

    ``initial`` must satisfy the Dirichlet data of ``space``.
    """

    space: SpacePair
    load: np.ndarray
    initial: np.ndarray
    gram: sp.csr_matrix = field(init=False, repr=False)
    coupling: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        self.gram = assemble_h1_gram(self.space)
        self.coupling = assemble_pressure_coupling(self.space)

    @classmethod
    def from_forcing(cls, space: SpacePair, forcing=None, initial=None) -> "Problem":
        load = assemble_load(space, forcing)
        if initial is None:
            initial = space.apply_dirichlet(np.zeros(space.num_velocity_dofs))
        return cls(space, load, np.asarray(initial, dtype=float))

    def norm(self, v: np.ndarray) -> float:
        return h1_seminorm(self.gram, v)


def picard_step(problem: Problem, u_k: np.ndarray, nu: float) -> SaddleSolution:
    """``nu (grad u, grad v) + b*(u_k, u, v) - (p, div v) = <f, v>``, ``(q, div u) = 0``."""
    a = nu * problem.gram + assemble_convection_picard(problem.space, u_k)
    return solve_saddle(SaddleSystem(problem.space, a, problem.coupling, problem.load))


def newton_step(problem: Problem, u_hat: np.ndarray, nu: float) -> SaddleSolution:
    """Newton linearization about ``u_hat``; the right side gains ``b*(u_hat, u_hat, v)``."""
    conv, rhs = assemble_convection_newton(problem.space, u_hat)
    a = nu * problem.gram + conv
    return solve_saddle(SaddleSystem(problem.space, a, problem.coupling, problem.load + rhs))


@dataclass
class MixResult:
    u_hat: np.ndarray
    alpha: np.ndarray
    theta: float
    form_gap: float
    lsq: AndersonResult


def anderson_mix(
    gram: sp.spmatrix,
    history: list[tuple[np.ndarray, np.ndarray]],
    u_tilde: np.ndarray,
    u_prev: np.ndarray,
    beta: float = 1.0,
    drop_tol: float = 1e-13,
    max_cond: float = 1e12,
) -> MixResult:
    """Anderson step on Picard outputs.

    ``history`` holds past pairs ``(u_tilde_j, u_{j-1})``, most recent first;
    ``(u_tilde, u_prev)`` is the current pair. The mixed iterate is

        beta * sum a_j u_tilde_j + (1 - beta) * sum a_j u_{j-1}

    with the optimal affine weights ``a``; it equals
    ``sum a_j u_tilde_j - (1 - beta) w_alpha`` and the gap between the two
    forms is returned as ``form_gap``. An empty history returns ``u_tilde``
    unrelaxed.
    """
    w0 = u_tilde - u_prev
    if not history:
        norm0 = h1_seminorm(gram, w0)
        if norm0 == 0.0:
            raise ZeroResidual("current residual has zero G-norm")
        empty = AndersonResult(np.zeros(0), w0, 1.0, np.zeros(0, dtype=bool), norm0)
        return MixResult(u_tilde.copy(), empty.alpha, 1.0, 0.0, empty)
    lsq = constrained_least_squares(
        gram, w0, [t - u for t, u in history], drop_tol=drop_tol, max_cond=max_cond
    )
    alpha = lsq.alpha
    mixed_tilde = u_tilde.copy()
    mixed_prev = u_prev.copy()
    for a, (t, u) in zip(alpha, history):
        if a != 0.0:
            mixed_tilde += a * (t - u_tilde)
            mixed_prev += a * (u - u_prev)
    u_hat = beta * mixed_tilde + (1.0 - beta) * mixed_prev
    other = mixed_tilde - (1.0 - beta) * lsq.combined
    form_gap = float(np.max(np.abs(u_hat - other)) / (1.0 + np.max(np.abs(u_hat))))
    if form_gap > FORM_GAP_TOL:
        raise AssertionError(f"mixed iterate forms disagree by {form_gap:.3e}")
    return MixResult(u_hat, alpha, lsq.theta, form_gap, lsq)


@dataclass
class IterationRecord:
    """One outer iteration ``k -> k+1`` (``k`` counts from 0)."""

    k: int
    res_tilde_hat: float
    res_tilde_u: float
    theta: float
    alpha: np.ndarray
    beta: float
    t_picard: float = 0.0
    t_anderson: float = 0.0
    t_newton: float = 0.0
    tilde_norm: float = math.nan
    form_gap: float = 0.0
    window: int = 0
    linear_residuals: tuple[float, ...] = ()

    @property
    def sum_abs_alpha(self) -> float:
        return float(np.abs(self.alpha).sum())


@dataclass
class IterationTrace:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)


@dataclass
class SolveResult:
    status: Status
    iterations: int
    velocity: np.ndarray
    pressure: np.ndarray | None
    trace: IterationTrace
    config: SolverConfig
    iterates: list[np.ndarray] = field(default_factory=list)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    @property
    def final_residual(self) -> float:
        if not self.trace.records:
            return math.nan
        name = "res_tilde_u" if self.config.stop_residual is StopResidual.TILDE_U else "res_tilde_hat"
        return getattr(self.trace.records[-1], name)


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def solve(config: SolverConfig, problem: Problem) -> SolveResult:
    """Run the configured nonlinear iteration from ``problem.initial``.

    Every iteration is completed before the stopping test, so the returned
    velocity is ``u_{k+1}``. The stopping residual defaults to
    ``||grad(u_tilde_{k+1} - u_hat_k)||`` with ``u_hat_0 = u_0``.
    """
    if config.method is Method.PRTX:
        return prtx_variant_solve(config, problem)
    depth = config.m if config.method is Method.AAPN else 0
    nu = config.nu
    u = problem.initial.copy()
    u_hat_prev = u
    pressure = None
    history: deque = deque(maxlen=max(depth, 1))
    trace = IterationTrace()
    iterates: list[np.ndarray] = []
    status = Status.MAX_ITERATIONS
    message = ""

    for k in range(config.max_iterations):
        rec = IterationRecord(k=k, res_tilde_hat=math.nan, res_tilde_u=math.nan,
                              theta=1.0, alpha=np.zeros(0), beta=config.beta)
        try:
            if config.method is Method.NEWTON:
                sol, rec.t_newton = _timed(newton_step, problem, u, nu)
                u_tilde = u_hat = sol.velocity
                rec.linear_residuals = (sol.residual,)
                final = sol
            else:
                tsol, rec.t_picard = _timed(picard_step, problem, u, nu)
                u_tilde = tsol.velocity
                rec.linear_residuals = (tsol.residual,)
                if config.method is Method.PICARD:
                    u_hat = u_tilde
                    final = tsol
            rec.res_tilde_hat = problem.norm(u_tilde - u_hat_prev)
            rec.res_tilde_u = problem.norm(u_tilde - u)
            rec.tilde_norm = problem.norm(u_tilde)

            if config.method in (Method.PICARD_NEWTON, Method.AAPN):
                window = list(history)[:depth] if depth else []
                rec.window = len(window)
                t0 = time.perf_counter()
                try:
                    mix = anderson_mix(problem.gram, window, u_tilde, u, config.beta,
                                       config.anderson_drop_tol, config.anderson_max_cond)
                    u_hat, rec.alpha, rec.theta, rec.form_gap = mix.u_hat, mix.alpha, mix.theta, mix.form_gap
                except ZeroResidual:
                    u_hat = u_tilde
                rec.t_anderson = time.perf_counter() - t0
                if depth:
                    history.appendleft((u_tilde, u))
                final, rec.t_newton = _timed(newton_step, problem, u_hat, nu)
                rec.linear_residuals += (final.residual,)
        except LinearSolveFailed as exc:
            trace.records.append(rec)
            status, message = Status.LINEAR_SOLVE_FAILED, str(exc)
            log.info("iteration %d: linear solve failed: %s", k, exc)
            break

        trace.records.append(rec)
        u, u_hat_prev, pressure = final.velocity, u_hat, final.pressure
        if config.keep_iterates:
            iterates.append(u.copy())
        res = rec.res_tilde_u if config.stop_residual is StopResidual.TILDE_U else rec.res_tilde_hat
        log.debug("iteration %d: residual %.3e theta %.4f", k, res, rec.theta)
        if not np.isfinite(res) or res > config.blowup_threshold or not np.all(np.isfinite(u)):
            status = Status.BLOWUP
            break
        if res <= config.tol:
            status = Status.CONVERGED
            break

    return SolveResult(status, len(trace), u, pressure, trace, config, iterates, message)


def prtx_variant_solve(config: SolverConfig, problem: Problem) -> SolveResult:
    """Four-step depth-1 variant with two Picard solves per iteration.

    Per iteration: ``t1 = g_P(u_k)``, ``t2 = g_P(t1)``,
    ``u_hat = (1 - a) t2 + a t1`` with ``a`` minimizing
    ``||(1 - a) grad(t2 - t1) + a grad(t1 - u_k)||``, then ``u_{k+1} = g_N(u_hat)``.
    ``m`` and ``beta`` of the config are ignored (fixed to 1).
    """
    nu = config.nu
    u = problem.initial.copy()
    u_hat_prev = u
    pressure = None
    trace = IterationTrace()
    iterates: list[np.ndarray] = []
    status = Status.MAX_ITERATIONS
    message = ""

    for k in range(config.max_iterations):
        rec = IterationRecord(k=k, res_tilde_hat=math.nan, res_tilde_u=math.nan,
                              theta=1.0, alpha=np.zeros(1), beta=1.0, window=1)
        try:
            s1, t1_time = _timed(picard_step, problem, u, nu)
            t1 = s1.velocity
            rec.res_tilde_hat = problem.norm(t1 - u_hat_prev)
            rec.res_tilde_u = problem.norm(t1 - u)
            rec.tilde_norm = problem.norm(t1)
            s2, t2_time = _timed(picard_step, problem, t1, nu)
            t2 = s2.velocity
            rec.t_picard = t1_time + t2_time
            t0 = time.perf_counter()
            try:
                lsq = constrained_least_squares(
                    problem.gram, t2 - t1, [t1 - u],
                    drop_tol=config.anderson_drop_tol, max_cond=config.anderson_max_cond,
                )
                a = lsq.alpha[0]
                rec.alpha, rec.theta = lsq.alpha, lsq.theta
            except ZeroResidual:
                a = 0.0
            u_hat = (1.0 - a) * t2 + a * t1
            rec.t_anderson = time.perf_counter() - t0
            final, rec.t_newton = _timed(newton_step, problem, u_hat, nu)
            rec.linear_residuals = (s1.residual, s2.residual, final.residual)
        except LinearSolveFailed as exc:
            trace.records.append(rec)
            status, message = Status.LINEAR_SOLVE_FAILED, str(exc)
            break

        trace.records.append(rec)
        u, u_hat_prev, pressure = final.velocity, u_hat, final.pressure
        if config.keep_iterates:
            iterates.append(u.copy())
        res = rec.res_tilde_u if config.stop_residual is StopResidual.TILDE_U else rec.res_tilde_hat
        if not np.isfinite(res) or res > config.blowup_threshold or not np.all(np.isfinite(u)):
            status = Status.BLOWUP
            break
        if res <= config.tol:
            status = Status.CONVERGED
            break

    return SolveResult(status, len(trace), u, pressure, trace, config, iterates, message)


class NotEstimable(ValueError):
    """Too few usable residuals to estimate a convergence order."""


@dataclass
class OrderEstimate:
    orders: np.ndarray
    estimate: float


def estimate_convergence_order(residuals, lower: float = 1e-9, upper: float = 1e-2) -> OrderEstimate:
    """Per-step orders ``log(r[k+1]/r[k]) / log(r[k]/r[k-1])``.

    Only the final strictly decreasing stretch is used, and only steps whose
    middle residual ``r[k]`` lies in ``[lower, upper]``. The estimate is the
    median of those orders.
    """
    r = np.asarray(residuals, dtype=float)
    if len(r) < 4 or not np.all(np.isfinite(r)) or np.any(r <= 0):
        raise NotEstimable("need at least four positive finite residuals")
    start = len(r) - 1
    while start > 0 and r[start - 1] > r[start]:
        start -= 1
    orders = [
        math.log(r[k + 1] / r[k]) / math.log(r[k] / r[k - 1])
        for k in range(start + 1, len(r) - 1)
        if lower <= r[k] <= upper
    ]
    if not orders:
        raise NotEstimable("no residual triple inside the asymptotic window")
    orders = np.array(orders)
    return OrderEstimate(orders, float(np.median(orders)))


def with_method(config: SolverConfig, **changes) -> SolverConfig:
    """Copy of ``config`` with fields replaced (validation re-runs)."""
    return replace(config, **changes)
