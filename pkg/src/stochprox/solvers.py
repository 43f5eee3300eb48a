"""Stochastic forward-backward and stochastic primal-dual splitting.

Forward-backward, for ``min f(x) + g(x)`` with ``grad g`` ``1/vartheta``-Lipschitz::

    x_{n+1} = x_n + lam_n * (prox_{gamma_n f_n}(x_n - gamma_n u_n) + a_n - x_n)

Primal-dual, for ``min f(x) + sum_k g_k(L_k x) + h(x)``::

    y_n     = prox_{rho f_n}(x_n - rho * (sum_k L_k^T v_{k,n} + u_n)) + b_n
    x_{n+1} = x_n + lam_n * (y_n - x_n)
    w_{k,n} = prox_{sigma_k g_k^*}(v_{k,n} + sigma_k L_k (2 y_n - x_n)) + c_{k,n}
    v_{k,n+1} = v_{k,n} + lam_n * (w_{k,n} - v_{k,n})

``u_n`` is whatever the gradient oracle returns at ``(x_n, n)``; ``f_n`` is an
optional synthetic perturbation of the exact prox; ``a_n``, ``b_n``,
``c_{k,n}`` are optional additive errors.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .diagnostics import snr
from .linops import estimate_norm_squared
from .oracles import NormScheduledError
from .prox import ProxPerturbation, norm, perturbed_prox
from .schedules import (
    PDStepsizeConfig,
    PowerLawSchedule,
    pd_stepsize_margin,
    validate_fb_conditions,
)

__all__ = [
    "StoppingRule",
    "TraceRow",
    "SolverTrace",
    "DivergenceError",
    "ConditionError",
    "FBProblem",
    "FBState",
    "fb_step",
    "fb_solve",
    "DualBlock",
    "PDProblem",
    "PDState",
    "pd_step",
    "pd_solve",
    "pd_stepsize_config",
    "kkt_residual",
]

logger = logging.getLogger(__name__)

ProxMap = Callable[[np.ndarray, float], np.ndarray]
GradOracle = Callable[[np.ndarray, int], np.ndarray]


class DivergenceError(FloatingPointError):
    """A non-finite value appeared in an iterate."""

    def __init__(self, iteration: int, what: str = "primal iterate", trace=None):
        self.iteration = iteration
        self.trace = trace
        super().__init__(f"non-finite {what} at iteration {iteration}")


class ConditionError(ValueError):
    """Convergence hypotheses fail and no override was given."""


@dataclass(frozen=True)
class StoppingRule:
    """Stop after ``max_iterations``, or once ``||x_{n+1}-x_n|| / ||x_n|| < rel_tol``
    for ``patience`` consecutive iterations (``rel_tol=None`` disables that)."""

    max_iterations: int
    rel_tol: Optional[float] = 1e-6
    patience: int = 10

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class TraceRow:
    n: int
    lam: float
    m: Optional[int]
    step_change: float
    residual_to_final: float = math.nan
    snr: float = math.nan
    wall_ms: float = math.nan
    dual_step_change: float = math.nan
    # partial sums of the series that converge almost surely (FB only,
    # when an exact gradient and a solution are supplied)
    grad_series: float = math.nan
    fb_series: float = math.nan


@dataclass
class SolverTrace:
    stride: int
    rows: list[TraceRow] = field(default_factory=list)
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def warnings(self) -> list[str]:
        return self.metadata.setdefault("warnings", [])

    def checkpoint(self, n: int, x) -> None:
        if self.stride > 0 and n % self.stride == 0:
            self.snapshots[n] = np.array(x, copy=True)

    def finalize(self, n_final: int, x_final) -> None:
        if self.stride > 0:
            self.snapshots[n_final] = np.array(x_final, copy=True)
        for row in self.rows:
            snap = self.snapshots.get(row.n + 1)
            if snap is not None:
                row.residual_to_final = norm(snap - x_final)


# ---------------------------------------------------------------------------
# forward-backward


@dataclass
class FBProblem:
    prox_f: ProxMap
    grad: GradOracle
    vartheta: float
    gamma: PowerLawSchedule
    lam: PowerLawSchedule
    tau: PowerLawSchedule = field(default_factory=lambda: PowerLawSchedule.constant(0.0))
    prox_perturbation: Optional[ProxPerturbation] = None
    prox_error: Optional[NormScheduledError] = None
    exact_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    solution: Optional[np.ndarray] = None


@dataclass
class FBState:
    n: int
    x: np.ndarray
    y: Optional[np.ndarray] = None  # last relaxation target prox(...) + a_n


def _relax(x, y, lam):
    if lam == 1.0:
        return np.array(y, copy=True)
    if lam == 0.0:
        return np.array(x, copy=True)
    return x + lam * (y - x)


def fb_step(state: FBState, problem: FBProblem) -> FBState:
    n, x = state.n, state.x
    gamma = problem.gamma(n)
    if not 0.0 < gamma < 2.0 * problem.vartheta:
        raise ValueError(f"gamma_{n} = {gamma} outside ]0, 2*vartheta[")
    lam = problem.lam(n)
    u = problem.grad(x, n)
    y = perturbed_prox(problem.prox_f, problem.prox_perturbation, n, x - gamma * u, gamma)
    if problem.prox_error is not None:
        a = problem.prox_error(n, x.shape)
        if a is not None:
            y = y + a
    x_new = _relax(x, y, lam)
    if not np.all(np.isfinite(x_new)):
        raise DivergenceError(n)
    return FBState(n + 1, x_new, y)


def _fb_monitors(problem: FBProblem, x, n, sums):
    g = problem.exact_grad(x)
    gz = problem.exact_grad(problem.solution)
    lam, gamma = problem.lam(n), problem.gamma(n)
    sums[0] += lam * norm(g - gz) ** 2
    v = x - gamma * g
    sums[1] += lam * norm(v - problem.prox_f(v, gamma) + gamma * gz) ** 2


class _Stopper:
    def __init__(self, stop: StoppingRule):
        self.stop = stop
        self.quiet = 0

    def update(self, step, x_norm) -> bool:
        tol = self.stop.rel_tol
        if tol is None:
            return False
        if step <= tol * x_norm:
            self.quiet += 1
        else:
            self.quiet = 0
        return self.quiet >= self.stop.patience


def _batch(oracle, n):
    get = getattr(oracle, "batch_for", None)
    return get(n) if get is not None else None


def fb_solve(
    problem: FBProblem,
    x0,
    stop: StoppingRule,
    truth=None,
    stride: int = 10,
    force: bool = False,
    wall_clock: bool = True,
):
    """Run :func:`fb_step` until ``stop``; returns ``(x_final, trace)``.

    The step-size hypotheses are validated first; a failure raises
    :class:`ConditionError` unless ``force``, in which case it is recorded
    in ``trace.metadata``. An exception raised mid-run (e.g.
    :class:`DivergenceError`) carries the partial trace as ``exc.trace``.
    """
    trace = SolverTrace(stride=stride)
    report = validate_fb_conditions(problem.gamma, problem.lam, problem.tau, problem.vartheta)
    trace.metadata["fb_conditions"] = report
    if not report.overall:
        if not force:
            raise ConditionError("forward-backward conditions fail:\n" + report.render())
        trace.metadata["override"] = True
        trace.warnings.append("convergence conditions overridden: " + "; ".join(report.failures))

    state = FBState(0, np.array(x0, dtype=float, copy=True))
    trace.checkpoint(0, state.x)
    monitor = problem.exact_grad is not None and problem.solution is not None
    sums = [0.0, 0.0]
    stopper = _Stopper(stop)
    t0 = time.perf_counter()
    try:
        for n in range(stop.max_iterations):
            if monitor:
                _fb_monitors(problem, state.x, n, sums)
            new = fb_step(state, problem)
            step = norm(new.x - state.x)
            row = TraceRow(n, problem.lam(n), _batch(problem.grad, n), step)
            if monitor:
                row.grad_series, row.fb_series = sums
            if truth is not None:
                row.snr = snr(truth, new.x).snr_db
            if wall_clock:
                row.wall_ms = 1e3 * (time.perf_counter() - t0)
            trace.rows.append(row)
            done = stopper.update(step, norm(state.x))
            state = new
            trace.checkpoint(state.n, state.x)
            if done:
                trace.metadata["stopped"] = "rel_tol"
                break
        else:
            trace.metadata["stopped"] = "max_iterations"
    except Exception as exc:
        # divergence, stream exhaustion, ...: hand the partial trace to the caller
        trace.finalize(state.n, state.x)
        exc.trace = trace
        raise
    trace.finalize(state.n, state.x)
    return state.x, trace


# ---------------------------------------------------------------------------
# primal-dual


@dataclass
class DualBlock:
    """One composite term ``g_k(L_k x)``.

    ``prox_conj(v, sigma)`` evaluates ``prox_{sigma g_k^*}(v)``; build it with
    :func:`stochprox.prox.prox_conjugate` when only the prox of ``g_k`` is known.
    """

    prox_conj: ProxMap
    op: object
    sigma: float
    norm_squared: Optional[float] = None
    error: Optional[NormScheduledError] = None


@dataclass
class PDProblem:
    prox_f: ProxMap
    grad: GradOracle
    blocks: Sequence[DualBlock]
    rho: float
    lam: PowerLawSchedule
    mu: Optional[float] = None
    prox_perturbation: Optional[ProxPerturbation] = None
    primal_error: Optional[NormScheduledError] = None
    exact_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass
class PDState:
    n: int
    x: np.ndarray
    v: list[np.ndarray]


def pd_step(state: PDState, problem: PDProblem) -> PDState:
    n, x, v = state.n, state.x, state.v
    rho, lam = problem.rho, problem.lam(n)
    u = problem.grad(x, n)
    coupling = None
    for block, vk in zip(problem.blocks, v):
        t = block.op.adjoint(vk)
        coupling = t if coupling is None else coupling + t
    arg = x - rho * (u if coupling is None else coupling + u)
    y = perturbed_prox(problem.prox_f, problem.prox_perturbation, n, arg, rho)
    if problem.primal_error is not None:
        b = problem.primal_error(n, x.shape)
        if b is not None:
            y = y + b
    reflected = 2.0 * y - x
    x_new = _relax(x, y, lam)
    if not np.all(np.isfinite(x_new)):
        raise DivergenceError(n)
    v_new = []
    for k, (block, vk) in enumerate(zip(problem.blocks, v)):
        s = block.sigma
        w = block.prox_conj(vk + s * block.op.apply(reflected), s)
        if block.error is not None:
            c = block.error(n, vk.shape)
            if c is not None:
                w = w + c
        vk_new = _relax(vk, w, lam)
        if not np.all(np.isfinite(vk_new)):
            raise DivergenceError(n, f"dual block {k}")
        v_new.append(vk_new)
    return PDState(n + 1, x_new, v_new)


def pd_stepsize_config(problem: PDProblem, norm_iterations: int = 500, safety: float = 1.05):
    """Step-size record for ``problem``; unknown operator norms are estimated
    by power iteration and inflated by ``safety``."""
    norms = [
        b.norm_squared
        if b.norm_squared is not None
        else estimate_norm_squared(b.op, iterations=norm_iterations, safety=safety)
        for b in problem.blocks
    ]
    return PDStepsizeConfig(
        problem.rho, tuple(b.sigma for b in problem.blocks), tuple(norms), problem.mu
    )


def pd_solve(
    problem: PDProblem,
    x0,
    v0=None,
    stop: StoppingRule = StoppingRule(1000),
    truth=None,
    stride: int = 10,
    force: bool = False,
    wall_clock: bool = True,
):
    """Run :func:`pd_step` until ``stop``; returns ``(x_final, v_final, trace)``.

    An exception raised mid-run carries the partial trace as ``exc.trace``.
    """
    trace = SolverTrace(stride=stride)
    if problem.mu is None:
        msg = "mu unknown: step-size condition not checked"
        if not force:
            raise ConditionError(msg)
        trace.warnings.append(msg)
    else:
        cfg = pd_stepsize_config(problem)
        margin = pd_stepsize_margin(cfg)
        trace.metadata["pd_stepsizes"] = cfg
        trace.metadata["pd_margin"] = margin
        if not margin > 0.5:
            msg = f"step-size condition fails: (1/rho - sum sigma_k ||L_k||^2) mu = {margin:.6g} <= 1/2"
            if not force:
                raise ConditionError(msg)
            trace.metadata["override"] = True
            trace.warnings.append(msg)
    if isinstance(problem.lam, PowerLawSchedule):
        if problem.lam.is_summable:
            trace.warnings.append("relaxation sequence is summable (sum lambda_n < inf)")
        if problem.lam.supremum > 1.0:
            trace.warnings.append("relaxation exceeds 1")
    for w in trace.warnings:
        logger.warning(w)

    x = np.array(x0, dtype=float, copy=True)
    if v0 is None:
        v = [np.zeros(b.op.range_shape) for b in problem.blocks]
    else:
        v = [np.array(vk, dtype=float, copy=True) for vk in v0]
    state = PDState(0, x, v)
    trace.checkpoint(0, state.x)
    stopper = _Stopper(stop)
    t0 = time.perf_counter()
    try:
        for n in range(stop.max_iterations):
            new = pd_step(state, problem)
            step = norm(new.x - state.x)
            dual = math.sqrt(sum(norm(a - b) ** 2 for a, b in zip(new.v, state.v)))
            row = TraceRow(n, problem.lam(n), _batch(problem.grad, n), step, dual_step_change=dual)
            if truth is not None:
                row.snr = snr(truth, new.x).snr_db
            if wall_clock:
                row.wall_ms = 1e3 * (time.perf_counter() - t0)
            trace.rows.append(row)
            done = stopper.update(step, norm(state.x))
            state = new
            trace.checkpoint(state.n, state.x)
            if done:
                trace.metadata["stopped"] = "rel_tol"
                break
        else:
            trace.metadata["stopped"] = "max_iterations"
    except Exception as exc:
        # divergence, stream exhaustion, ...: hand the partial trace to the caller
        trace.finalize(state.n, state.x)
        exc.trace = trace
        raise
    trace.finalize(state.n, state.x)
    return state.x, state.v, trace


def kkt_residual(problem: PDProblem, x, v) -> float:
    """Displacement of ``(x, v)`` under one exact, error-free, unrelaxed
    primal-dual step, divided by ``1 + ||x|| + ||v||``. Zero exactly at
    primal-dual solutions."""
    if problem.exact_grad is None:
        raise ValueError("kkt_residual needs problem.exact_grad")
    x = np.asarray(x, dtype=float)
    rho = problem.rho
    arg = x - rho * problem.exact_grad(x)
    for block, vk in zip(problem.blocks, v):
        arg = arg - rho * block.op.adjoint(vk)
    y = problem.prox_f(arg, rho)
    sq = norm(y - x) ** 2
    reflected = 2.0 * y - x
    v_norm_sq = 0.0
    for block, vk in zip(problem.blocks, v):
        w = block.prox_conj(vk + block.sigma * block.op.apply(reflected), block.sigma)
        sq += norm(w - vk) ** 2
        v_norm_sq += norm(vk) ** 2
    return math.sqrt(sq) / (1.0 + norm(x) + math.sqrt(v_norm_sq))
