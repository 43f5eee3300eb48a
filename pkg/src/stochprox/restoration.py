"""Online image restoration: box constraint + isotropic TV + the expected
quadratic misfit of a stochastic blur stream, solved by stochastic
primal-dual splitting with a growing-batch gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .degradation import DegradationConfig, ObservationStream
from .linops import DiscreteGradient, estimate_norm_squared
from .oracles import CachePolicy, EmpiricalGradientOracle, ExactGradientOracle
from .prox import BoxConstraint, GroupShrinkSpec
from .schedules import PDStepsizeConfig, PowerLawSchedule
from .solvers import DualBlock, PDProblem

__all__ = ["synthetic_image", "RestorationSetup", "build_restoration", "default_steps"]

NORM_SAFETY = 1.05


def synthetic_image(width: int = 64, height: int = 64) -> np.ndarray:
    """Piecewise-constant test scene with values in ``[0, 255]``."""
    yy, xx = np.mgrid[0:height, 0:width]
    u, v = xx / width, yy / height
    img = np.full((height, width), 40.0)
    img[(u > 0.1) & (u < 0.55) & (v > 0.15) & (v < 0.5)] = 200.0
    img[(u - 0.68) ** 2 + (v - 0.62) ** 2 < 0.22**2] = 120.0
    img[(u > 0.2) & (u < 0.35) & (v > 0.62) & (v < 0.9)] = 250.0
    img[(u > 0.75) & (u < 0.92) & (v > 0.08) & (v < 0.25)] = 0.0
    img[np.abs((u - 0.15) - 0.6 * (v - 0.55)) < 0.03] = 160.0
    return img


def default_steps(mu: float, norm_sq: float, theta: float = 1.0, sigma=None, safety: float = 0.9):
    """``sigma = theta / ||L||^2`` (unless given) and
    ``rho = safety / (sigma ||L||^2 + 1/(2 mu))``.

    With ``safety < 1`` the margin ``(1/rho - sigma ||L||^2) mu`` exceeds 1/2.
    """
    if sigma is None:
        sigma = theta / norm_sq
    rho = safety / (sigma * norm_sq + 1.0 / (2.0 * mu))
    return rho, sigma


@dataclass
class RestorationSetup:
    cfg: DegradationConfig
    xbar: np.ndarray
    stream: ObservationStream
    oracle: EmpiricalGradientOracle
    exact: ExactGradientOracle
    problem: PDProblem
    box: BoxConstraint
    tv: GroupShrinkSpec
    gradient: DiscreteGradient
    norm_sq: float
    lam: PowerLawSchedule
    batch: PowerLawSchedule

    @property
    def steps(self) -> PDStepsizeConfig:
        return PDStepsizeConfig(
            self.problem.rho, (self.problem.blocks[0].sigma,), (self.norm_sq,), self.problem.mu
        )

    def initial_point(self) -> np.ndarray:
        """First observation clamped to the box."""
        _, z0 = self.stream.observation(0)
        return self.box.prox(z0)


def build_restoration(
    cfg: DegradationConfig,
    xbar,
    tv_weight: float = 0.5,
    box: BoxConstraint = BoxConstraint(0.0, 255.0),
    lambda_pivot: float = 500.0,
    lambda_exp: float = 0.95,
    batch_exp: float = 1.1,
    rho: float | None = None,
    sigma: float | None = None,
    theta: float = 1.0,
    cache: CachePolicy | str = CachePolicy.INCREMENTAL,
    norm_iterations: int = 500,
    records=None,
) -> RestorationSetup:
    stream = ObservationStream(cfg, xbar, records=records)
    lam = PowerLawSchedule.saturating(lambda_exp, lambda_pivot)
    batch = PowerLawSchedule.power_growth(batch_exp)
    oracle = EmpiricalGradientOracle(stream, batch, cache=cache)
    exact = ExactGradientOracle(cfg, xbar)
    mu = 1.0 / exact.lipschitz
    L = DiscreteGradient(cfg.width, cfg.height)
    norm_sq = estimate_norm_squared(L, iterations=norm_iterations, safety=NORM_SAFETY)
    rho_default, sigma = default_steps(mu, norm_sq, theta, sigma)
    rho = rho_default if rho is None else rho
    tv = GroupShrinkSpec(group_size=2, weight=tv_weight)
    block = DualBlock(prox_conj=tv.conjugate_prox, op=L, sigma=sigma, norm_squared=norm_sq)
    problem = PDProblem(
        prox_f=box.prox,
        grad=oracle,
        blocks=[block],
        rho=rho,
        lam=lam,
        mu=mu,
        exact_grad=exact,
    )
    return RestorationSetup(
        cfg, np.asarray(xbar, dtype=float), stream, oracle, exact, problem, box, tv, L, norm_sq, lam, batch
    )
