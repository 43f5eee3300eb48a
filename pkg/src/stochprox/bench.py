"""Synthetic benchmark problems with known solutions, and the self-check
suites run by ``stochprox bench``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .degradation import DegradationConfig, ObservationStream, sample_operator
from .linops import DiscreteGradient, FrequencyOperator, estimate_norm_squared
from .oracles import EmpiricalGradientOracle, ExactGradientOracle, sample_gradient
from .prox import BoxConstraint, GroupShrinkSpec, norm, prox_conjugate
from .restoration import default_steps, synthetic_image
from .schedules import PowerLawSchedule, batch_size
from .solvers import (
    DualBlock,
    FBProblem,
    PDProblem,
    StoppingRule,
    fb_solve,
    kkt_residual,
    pd_solve,
    pd_step,
    PDState,
)

__all__ = [
    "MaskedQuadratic",
    "masked_quadratic_problem",
    "tiny_tv_problem",
    "compute_tiny_tv_reference",
    "load_tiny_tv_reference",
    "Check",
    "SUITES",
    "run_suite",
]

DEFAULT_LAMBDA = PowerLawSchedule.saturating(0.95, 500.0)
DEFAULT_BATCH = PowerLawSchedule.power_growth(1.1)


class MaskedQuadratic:
    """``g(x) = 1/2 E||A (x - c) - e||^2`` with ``A = sqrt(2) diag(Bernoulli(1/2))``.

    ``E[A^2] = I``, so ``grad g(x) = x - c`` (``vartheta = 1``) and over the box
    the minimizer is ``clip(c)``. The stochastic oracle is the growing-window
    mean over samples ``y_i = A_i c + e_i``, like the blur stream in miniature.
    """

    def __init__(self, c, noise_sd: float = 0.05, seed: int = 0, batch: PowerLawSchedule = DEFAULT_BATCH):
        self.c = np.asarray(c, dtype=float)
        self.noise_sd = noise_sd
        self.seed = seed
        self.batch = batch
        self._count = 0
        self._sum_aa = np.zeros_like(self.c)
        self._sum_ay = np.zeros_like(self.c)

    def sample(self, i: int):
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(i,)))
        a = math.sqrt(2.0) * (rng.random(self.c.shape) < 0.5)
        y = a * self.c + self.noise_sd * rng.standard_normal(self.c.shape)
        return a, y

    def batch_for(self, n: int) -> int:
        return batch_size(self.batch, n + 1)

    def __call__(self, x, n: int):
        m = self.batch_for(n)
        if m < self._count:
            self._count = 0
            self._sum_aa[:] = 0
            self._sum_ay[:] = 0
        for i in range(self._count, m):
            a, y = self.sample(i)
            self._sum_aa += a * a
            self._sum_ay += a * y
        self._count = m
        return (self._sum_aa * x - self._sum_ay) / m

    def exact(self, x):
        return np.asarray(x, dtype=float) - self.c


def masked_quadratic_problem(
    dim: int = 100, seed: int = 0, noise_sd: float = 0.05, box=BoxConstraint(-1.0, 1.0), gamma: float = 0.9
):
    """Stochastic FB benchmark; returns ``(problem, x0, solution)``.

    The per-component variance of the batch mean of ``A_i^2`` is ``1/m``, so
    ``tau_n = n^-1.1`` bounds the relative variance term for ``m_n = n^1.1``.
    """
    rng = np.random.default_rng(seed)
    c = rng.uniform(-2.0, 2.0, dim)
    oracle = MaskedQuadratic(c, noise_sd=noise_sd, seed=seed)
    solution = box.prox(c)
    problem = FBProblem(
        prox_f=box.prox,
        grad=oracle,
        vartheta=1.0,
        gamma=PowerLawSchedule.constant(gamma),
        lam=DEFAULT_LAMBDA,
        tau=PowerLawSchedule.pure(1.0, 1.1),
        exact_grad=oracle.exact,
        solution=solution,
    )
    return problem, np.zeros(dim), solution


# ---------------------------------------------------------------------------
# tiny TV problem


TINY_CFG = DegradationConfig(8, 8, blur_size=3, keep_prob=0.3, noise_sigma=5.0, master_seed=0)
TINY_TV_WEIGHT = 5.0


def tiny_tv_problem(stochastic: bool = False, cfg: DegradationConfig = TINY_CFG, tv_weight: float = TINY_TV_WEIGHT):
    """8x8 box + TV + blurred quadratic. Exact gradient unless ``stochastic``
    (then the growing-batch empirical mean). Returns ``(problem, xbar)``."""
    xbar = synthetic_image(cfg.width, cfg.height)
    exact = ExactGradientOracle(cfg, xbar)
    L = DiscreteGradient(cfg.width, cfg.height)
    # exact largest eigenvalue of the 8x8 Neumann Laplacian, with the usual margin
    norm_sq = 1.05 * 8.0 * math.sin(math.pi * (cfg.width - 1) / (2 * cfg.width)) ** 2
    mu = 1.0 / exact.lipschitz
    rho, sigma = default_steps(mu, norm_sq)
    tv = GroupShrinkSpec(2, tv_weight)
    if stochastic:
        grad = EmpiricalGradientOracle(ObservationStream(cfg, xbar), DEFAULT_BATCH, cache="incremental")
    else:
        grad = exact
    problem = PDProblem(
        prox_f=BoxConstraint(0.0, 255.0).prox,
        grad=grad,
        blocks=[DualBlock(tv.conjugate_prox, L, sigma, norm_squared=norm_sq)],
        rho=rho,
        lam=PowerLawSchedule.constant(1.0) if not stochastic else DEFAULT_LAMBDA,
        mu=mu,
        exact_grad=exact,
    )
    return problem, xbar


def compute_tiny_tv_reference(iterations: int = 1_000_000):
    """Deterministic long run on :func:`tiny_tv_problem`; returns ``(x, v)``."""
    problem, xbar = tiny_tv_problem()
    state = PDState(0, np.array(xbar), [np.zeros((2,) + xbar.shape)])
    for _ in range(iterations):
        state = pd_step(state, problem)
    return state.x, state.v[0]


def load_tiny_tv_reference():
    """The frozen reference pair ``(x*, v*)`` shipped with the package."""
    with resources.files("stochprox").joinpath("data/tiny_tv_reference.npz").open("rb") as fh:
        data = np.load(fh)
        return data["x"].copy(), data["v"].copy()


# ---------------------------------------------------------------------------
# suites


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


def _suite_prox():
    rng = np.random.default_rng(0)
    checks = []
    tv = GroupShrinkSpec(2, 1.0)
    worst = 0.0
    for _ in range(200):
        sigma = float(rng.uniform(0.05, 5.0))
        x = rng.standard_normal((2, 6, 6)) * rng.uniform(0.1, 10)
        lhs = prox_conjugate(tv.prox, sigma, x) + sigma * tv.prox(x / sigma, 1.0 / sigma)
        worst = max(worst, norm(lhs - x) / norm(x))
    checks.append(Check("moreau_identity", worst <= 1e-12, f"max rel err {worst:.2e}"))

    x = np.array([1.0, 1.0])
    thresh = 0.3
    r = np.linspace(0.0, 2.0, 200001)
    obj = thresh * r + 0.5 * (r - math.sqrt(2.0)) ** 2
    radial = r[np.argmin(obj)] * x / math.sqrt(2.0)
    got = GroupShrinkSpec(2, thresh).prox(x.reshape(2, 1), 1.0).ravel()
    err = norm(got - radial)
    checks.append(Check("group_shrink_radial_oracle", err <= 1e-3, f"err {err:.2e}"))

    box = BoxConstraint(-1.0, 1.0)
    bad = 0
    for prox in (box.prox, lambda v, g=1.0: tv.prox(v, 0.7), lambda v, g=1.0: tv.conjugate_prox(v)):
        for _ in range(3000):
            a = rng.standard_normal((2, 3, 3)) * 3
            b = rng.standard_normal((2, 3, 3)) * 3
            pa, pb = prox(a), prox(b)
            d = pa - pb
            if np.sum(d * d) > np.sum(d * (a - b)) + 1e-12:
                bad += 1
    checks.append(Check("firm_nonexpansiveness", bad == 0, f"{bad} violations"))
    return checks


def _suite_linops():
    rng = np.random.default_rng(1)
    checks = []
    L = DiscreteGradient(17, 13)
    K = sample_operator(DegradationConfig(17, 13, keep_prob=0.3, master_seed=3), 0)
    worst = 0.0
    for op in (L, K):
        for _ in range(50):
            x = rng.standard_normal(op.domain_shape)
            y = rng.standard_normal(op.range_shape)
            lhs = float(np.sum(op.apply(x) * y))
            rhs = float(np.sum(x * op.adjoint(y)))
            worst = max(worst, abs(lhs - rhs) / (norm(x) * norm(y)))
    checks.append(Check("adjoint_dot_product", worst <= 1e-10, f"max rel err {worst:.2e}"))
    est16 = estimate_norm_squared(DiscreteGradient(16, 16), iterations=1000)
    checks.append(Check("grad_norm_16", 7.0 <= est16 <= 8.0, f"{est16:.6f}"))
    est128 = estimate_norm_squared(DiscreteGradient(128, 128), iterations=1000)
    checks.append(Check("grad_norm_128", 7.9 <= est128 <= 8.0 + 1e-6, f"{est128:.6f}"))
    resp = np.fft.fft2(rng.standard_normal((16, 16)))
    F = FrequencyOperator(resp)
    est = estimate_norm_squared(F, iterations=3000)
    err = abs(est - F.norm_squared())
    checks.append(Check("freq_norm", err <= 1e-6, f"abs err {err:.2e}"))
    return checks


def _suite_fb_quadratic():
    problem, x0, solution = masked_quadratic_problem()
    x, trace = fb_solve(problem, x0, StoppingRule(2000, rel_tol=None), stride=1)
    rel = norm(x - solution) / norm(solution)
    return [Check("fb_masked_quadratic_2000", rel <= 1e-3, f"rel err {rel:.2e}")]


def _suite_pd_tiny_tv():
    problem, xbar = tiny_tv_problem()
    xs, vs = load_tiny_tv_reference()
    moved = pd_step(PDState(0, xs, [vs]), problem)
    disp = math.sqrt(norm(moved.x - xs) ** 2 + norm(moved.v[0] - vs) ** 2)
    checks = [Check("reference_fixed_point", disp <= 1e-6, f"displacement {disp:.2e}")]
    sp, _ = tiny_tv_problem(stochastic=True)
    x0 = BoxConstraint(0.0, 255.0).prox(sp.grad.stream.observation(0)[1])
    v0 = [np.zeros((2,) + x0.shape)]
    r0 = kkt_residual(sp, x0, v0)
    x, v, _ = pd_solve(sp, x0, v0, StoppingRule(5000, rel_tol=None), stride=0, wall_clock=False)
    r = kkt_residual(sp, x, v)
    checks.append(Check("stochastic_kkt_decrease", r <= 1e-2 * r0, f"{r:.3e} vs initial {r0:.3e}"))
    return checks


def _suite_oracle_stats():
    cfg = DegradationConfig(16, 16, keep_prob=0.3, noise_sigma=0.0, master_seed=11)
    rng = np.random.default_rng(2)
    xbar = rng.uniform(0, 255, cfg.shape)
    x = rng.uniform(0, 255, cfg.shape)
    stream = ObservationStream(cfg, xbar, cache_size=0)
    mean = np.zeros(cfg.shape)
    draws = 2000
    for i in range(draws):
        mean += sample_gradient(stream, i, x)
    mean /= draws
    exact = ExactGradientOracle(cfg, xbar)(x)
    rel = norm(mean - exact) / norm(exact)
    checks = [Check("unbiased_single_sample", rel <= 0.02, f"rel err {rel:.4f}")]
    slope = variance_slope(cfg, xbar, x)
    checks.append(Check("variance_decay_slope", -1.15 <= slope <= -0.85, f"slope {slope:.3f}"))
    return checks


def variance_slope(cfg, xbar, x, batches=(1, 4, 16, 64, 256), replicates: int = 40) -> float:
    """Log-log slope of ``E||u - grad h||^2`` against the batch size, each
    batch built from fresh disjoint records."""
    exact = ExactGradientOracle(cfg, xbar)(x)
    stream = ObservationStream(cfg, xbar, cache_size=0)
    logs = []
    base = 0
    for m in batches:
        err = 0.0
        for _ in range(replicates):
            acc = np.zeros(cfg.shape)
            for i in range(base, base + m):
                acc += sample_gradient(stream, i, x)
            base += m
            err += norm(acc / m - exact) ** 2
        logs.append(math.log(err / replicates))
    return float(np.polyfit(np.log(batches), logs, 1)[0])


SUITES = {
    "prox": _suite_prox,
    "linops": _suite_linops,
    "fb-quadratic": _suite_fb_quadratic,
    "pd-tiny-tv": _suite_pd_tiny_tv,
    "oracle-stats": _suite_oracle_stats,
}


def run_suite(name: str):
    """Run one named suite; returns ``(checks, seconds)``."""
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    t0 = time.perf_counter()
    checks = SUITES[name]()
    return checks, time.perf_counter() - t0
