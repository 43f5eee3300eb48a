"""Parametric scalar sequences and symbolic convergence-condition checks.

Three closed forms cover every sequence the solvers need:

* ``pure``:        ``c * n**(-p)``, evaluated at ``max(n, 1)`` so that ``n = 0`` is finite;
* ``saturating``:  ``c / (1 + (n / pivot)**p)``, with ``p >= 0``;
* ``powerGrowth``: ``ceil(c * n**p)``, with ``p >= 0``.

Every bounded member of these families is nonincreasing in ``n``, which is
what makes the suprema below exact rather than finite-horizon estimates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Union

import numpy as np

__all__ = [
    "ScheduleForm",
    "PowerLawSchedule",
    "RelaxationBranch",
    "FBConditionReport",
    "PDStepsizeConfig",
    "evaluate",
    "batch_size",
    "batch_sizes",
    "check_power_law_summability",
    "validate_fb_conditions",
    "validate_pd_stepsizes",
    "pd_stepsize_margin",
    "validate_online_schedules",
]

#: horizon used for arbitrary (non-parametric) sequences
NUMERIC_HORIZON = 100_000


class ScheduleForm(str, enum.Enum):
    PURE = "pure"
    SATURATING = "saturating"
    POWER_GROWTH = "powerGrowth"


@dataclass(frozen=True)
class PowerLawSchedule:
    """A power-law sequence ``n -> value``.

    Parameters
    ----------
    form : ScheduleForm
        Which closed form to use (see module docstring).
    exponent : float
        The power ``p``.
    amplitude : float
        Multiplicative constant ``c`` (nonnegative).
    pivot : float
        Scale of ``n`` in the saturating form (500 for the online restoration
        relaxation sequence).
    """

    form: ScheduleForm
    exponent: float
    amplitude: float = 1.0
    pivot: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "form", ScheduleForm(self.form))
        if not math.isfinite(self.exponent):
            raise ValueError(f"exponent must be finite, got {self.exponent}")
        if self.amplitude < 0 or not math.isfinite(self.amplitude):
            raise ValueError(f"amplitude must be finite and >= 0, got {self.amplitude}")
        if self.pivot <= 0:
            raise ValueError(f"pivot must be > 0, got {self.pivot}")
        if self.form is not ScheduleForm.PURE and self.exponent < 0:
            raise ValueError(f"{self.form.value} schedules need exponent >= 0")

    # constructors -----------------------------------------------------------

    @classmethod
    def constant(cls, value: float) -> "PowerLawSchedule":
        return cls(ScheduleForm.PURE, 0.0, amplitude=value)

    @classmethod
    def pure(cls, amplitude: float, exponent: float) -> "PowerLawSchedule":
        return cls(ScheduleForm.PURE, exponent, amplitude=amplitude)

    @classmethod
    def saturating(cls, exponent: float, pivot: float, amplitude: float = 1.0) -> "PowerLawSchedule":
        return cls(ScheduleForm.SATURATING, exponent, amplitude=amplitude, pivot=pivot)

    @classmethod
    def power_growth(cls, exponent: float, amplitude: float = 1.0) -> "PowerLawSchedule":
        return cls(ScheduleForm.POWER_GROWTH, exponent, amplitude=amplitude)

    def __call__(self, n: int) -> float:
        return evaluate(self, n)

    # closed-form properties -------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return self.amplitude == 0.0

    @property
    def is_constant(self) -> bool:
        return self.is_zero or self.exponent == 0.0

    @property
    def is_nonincreasing(self) -> bool:
        if self.is_constant:
            return True
        if self.form is ScheduleForm.POWER_GROWTH:
            return False
        return self.exponent > 0

    @property
    def supremum(self) -> float:
        if self.is_nonincreasing:
            return evaluate(self, 0)
        return math.inf

    @property
    def infimum(self) -> float:
        """Greatest lower bound over ``n >= 0``."""
        if self.is_zero:
            return 0.0
        if self.form is ScheduleForm.POWER_GROWTH:
            return evaluate(self, 0)
        if self.exponent > 0:
            return 0.0
        # constant, or a growing pure law whose smallest value is at n = 0
        return evaluate(self, 0)

    @property
    def is_summable(self) -> bool:
        if self.is_zero:
            return True
        if self.form is ScheduleForm.POWER_GROWTH:
            return False
        return check_power_law_summability(self.exponent, "sum")


Schedule = Union[PowerLawSchedule, Callable[[int], float]]


def evaluate(schedule: PowerLawSchedule, n: int) -> float:
    """Value of ``schedule`` at index ``n >= 0`` (closed form, no batch clamping)."""
    if n < 0:
        raise ValueError(f"schedule index must be >= 0, got {n}")
    c, p = schedule.amplitude, schedule.exponent
    if schedule.form is ScheduleForm.PURE:
        if p == 0.0:
            return float(c)
        return float(c * max(n, 1) ** (-p))
    if schedule.form is ScheduleForm.SATURATING:
        ratio = n / schedule.pivot
        return float(c / (1.0 + ratio ** p))
    return float(np.ceil(c * np.power(float(n), p)))


@lru_cache(maxsize=64)
def _batch_table(schedule: PowerLawSchedule, count: int) -> np.ndarray:
    k = np.arange(count, dtype=np.float64)
    target = np.ceil(schedule.amplitude * np.power(k, schedule.exponent)).astype(np.int64)
    target[0] = max(int(target[0]), 1)
    # m_n = max(m_{n-1} + 1, target_n)  <=>  m_n - n = running max of (target_k - k)
    offsets = np.maximum.accumulate(target - np.arange(count, dtype=np.int64))
    table = offsets + np.arange(count, dtype=np.int64)
    table.setflags(write=False)
    return table


def batch_sizes(schedule: PowerLawSchedule, count: int) -> np.ndarray:
    """First ``count`` terms of the strictly increasing batch sequence ``m_n``.

    ``m_0 >= 1`` and ``m_n = max(m_{n-1} + 1, ceil(c * n**p))``.
    """
    if count <= 0:
        return np.zeros(0, dtype=np.int64)
    # round the table size up so consecutive calls share a cache entry
    size = 1 << max(int(count - 1).bit_length(), 4)
    return _batch_table(schedule, size)[:count].copy()


def batch_size(schedule: PowerLawSchedule, n: int) -> int:
    if n < 0:
        raise ValueError(f"batch index must be >= 0, got {n}")
    size = 1 << max(int(n).bit_length(), 4)
    return int(_batch_table(schedule, size)[n])


def check_power_law_summability(exponent: float, kind: str = "sum") -> bool:
    """p-series test for ``sum n**(-exponent)`` (``kind='sum'``) or
    ``sum sqrt(n**(-exponent))`` (``kind='sumOfSqrt'``)."""
    if kind == "sum":
        return exponent > 1.0
    if kind == "sumOfSqrt":
        return exponent / 2.0 > 1.0
    raise ValueError(f"unknown summability kind {kind!r}")


# ---------------------------------------------------------------------------
# forward-backward conditions


class RelaxationBranch(str, enum.Enum):
    INF_LAMBDA_POSITIVE = "infLambdaPositive"
    CONSTANT_GAMMA_SUMMABLE_TAU = "constantGammaSummableTau"


@dataclass
class FBConditionReport:
    gamma_inf_positive: bool
    tau_sup_finite: bool
    step_bound_holds: bool
    relaxation_branch: RelaxationBranch | None
    overall: bool
    conclusive: bool = True
    step_bound_value: float = math.nan
    failures: list[str] = field(default_factory=list)

    def render(self) -> str:
        lines = [
            f"gamma_inf_positive = {self.gamma_inf_positive}",
            f"tau_sup_finite = {self.tau_sup_finite}",
            f"step_bound_holds = {self.step_bound_holds}"
            f" (sup (1+tau_n) gamma_n = {self.step_bound_value:.6g})",
            "relaxation_branch = "
            + (self.relaxation_branch.value if self.relaxation_branch else "none"),
            f"overall = {self.overall}" + ("" if self.conclusive else " (inconclusive)"),
        ]
        lines.extend(f"failed: {f}" for f in self.failures)
        return "\n".join(lines)


def _numeric_fb(gamma, lam, tau, vartheta, horizon) -> FBConditionReport:
    n = range(horizon)
    g = np.array([gamma(i) for i in n], dtype=float)
    t = np.array([tau(i) for i in n], dtype=float)
    l = np.array([lam(i) for i in n], dtype=float)
    step = float(np.max((1.0 + t) * g))
    report = FBConditionReport(
        gamma_inf_positive=bool(np.min(g) > 0),
        tau_sup_finite=bool(np.all(np.isfinite(t))),
        step_bound_holds=step < 2.0 * vartheta,
        relaxation_branch=None,
        overall=False,
        conclusive=False,
        step_bound_value=step,
    )
    if np.min(l) > 0:
        report.relaxation_branch = RelaxationBranch.INF_LAMBDA_POSITIVE
    elif np.ptp(g) == 0:
        report.relaxation_branch = RelaxationBranch.CONSTANT_GAMMA_SUMMABLE_TAU
    return report


def validate_fb_conditions(
    gamma: Schedule,
    lam: Schedule,
    tau: Schedule,
    vartheta: float,
    horizon: int = NUMERIC_HORIZON,
) -> FBConditionReport:
    """Check the step-size and relaxation hypotheses of the stochastic
    forward-backward convergence theorem.

    Parametric schedules are decided exactly. Any other callable only gets a
    finite-horizon check and the report is flagged ``conclusive=False``
    (summability cannot be decided from finitely many terms).
    """
    if vartheta <= 0:
        raise ValueError("vartheta must be > 0")
    parametric = all(isinstance(s, PowerLawSchedule) for s in (gamma, lam, tau))
    if not parametric:
        report = _numeric_fb(gamma, lam, tau, vartheta, horizon)
    else:
        tau_sup = tau.supremum
        gamma_sup = gamma.supremum
        if math.isinf(tau_sup) or math.isinf(gamma_sup):
            step = math.inf
        else:
            # bounded power laws are nonincreasing, so the product peaks at n = 0
            step = (1.0 + evaluate(tau, 0)) * evaluate(gamma, 0)
        report = FBConditionReport(
            gamma_inf_positive=gamma.infimum > 0,
            tau_sup_finite=math.isfinite(tau_sup),
            step_bound_holds=step < 2.0 * vartheta,
            relaxation_branch=None,
            overall=False,
            step_bound_value=step,
        )
        if lam.infimum > 0:
            report.relaxation_branch = RelaxationBranch.INF_LAMBDA_POSITIVE
        elif gamma.is_constant and tau.is_summable and not lam.is_summable:
            report.relaxation_branch = RelaxationBranch.CONSTANT_GAMMA_SUMMABLE_TAU

    if not report.gamma_inf_positive:
        report.failures.append("inf gamma_n > 0")
    if not report.tau_sup_finite:
        report.failures.append("sup tau_n < inf")
    if not report.step_bound_holds:
        report.failures.append("sup (1+tau_n) gamma_n < 2 vartheta")
    if parametric and lam.supremum > 1.0:
        report.failures.append("lambda_n <= 1")
    if report.relaxation_branch is None:
        report.failures.append(
            "inf lambda_n > 0, or [gamma_n constant, sum tau_n < inf, sum lambda_n = inf]"
        )
    report.overall = report.conclusive and not report.failures
    return report


# ---------------------------------------------------------------------------
# primal-dual step sizes


@dataclass(frozen=True)
class PDStepsizeConfig:
    """Primal step ``rho``, dual steps ``sigmas``, squared norms of the linear
    operators and ``mu`` (the gradient of the smooth term is ``1/mu``-Lipschitz)."""

    rho: float
    sigmas: tuple[float, ...]
    operator_norm_squares: tuple[float, ...]
    mu: float

    def __post_init__(self):
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        object.__setattr__(
            self, "operator_norm_squares", tuple(float(s) for s in self.operator_norm_squares)
        )
        if len(self.sigmas) == 0 or len(self.sigmas) != len(self.operator_norm_squares):
            raise ValueError("sigmas and operator_norm_squares must have equal length >= 1")
        if self.rho <= 0 or self.mu <= 0 or any(s <= 0 for s in self.sigmas):
            raise ValueError("rho, mu and every sigma must be > 0")
        if any(v < 0 for v in self.operator_norm_squares):
            raise ValueError("operator norm squares must be >= 0")


def pd_stepsize_margin(cfg: PDStepsizeConfig) -> float:
    """``(1/rho - sum sigma_k ||L_k||^2) * mu``; the condition is ``> 1/2``."""
    coupling = math.fsum(s * v for s, v in zip(cfg.sigmas, cfg.operator_norm_squares))
    return (1.0 / cfg.rho - coupling) * cfg.mu


def validate_pd_stepsizes(cfg: PDStepsizeConfig) -> bool:
    return pd_stepsize_margin(cfg) > 0.5


def validate_online_schedules(delta: float, kappa: float) -> bool:
    """Batch growth ``m_n = O(n^(1+delta))`` with relaxation ``O(n^-kappa)``
    needs ``kappa`` in ``]1 - delta, 1] & [0, 1]``."""
    if delta <= 0:
        raise ValueError("delta must be > 0")
    return kappa > 1.0 - delta and 0.0 <= kappa <= 1.0
