"""First-order information for the smooth term ``h(x) = 1/2 E||K_0 x - z_0||^2``.

Gradient oracles are callables ``oracle(x, n) -> array``; the iteration
index lets stochastic oracles pick their batch and keeps them reproducible.
"""

from __future__ import annotations

import enum

import numpy as np

from .degradation import DegradationConfig, ObservationStream, nominal_blur_response
from .linops import freq_adjoint, freq_apply
from .prox import norm
from .schedules import PowerLawSchedule, batch_size

__all__ = [
    "CachePolicy",
    "EmpiricalGradientOracle",
    "ExactGradientOracle",
    "sample_gradient",
    "exact_gradient",
    "gradient_lipschitz",
    "GradientErrorInjector",
    "NormScheduledError",
    "inject_gradient_error",
    "with_injected_error",
]


class CachePolicy(str, enum.Enum):
    RECOMPUTE_ALL = "recomputeAll"
    INCREMENTAL = "incremental"


def sample_gradient(stream: ObservationStream, i: int, x) -> np.ndarray:
    """``K_i^T (K_i x - z_i)``."""
    K, z = stream.observation(i)
    return freq_adjoint(K, freq_apply(K, x) - z)


class EmpiricalGradientOracle:
    """Growing-window mean ``u_n = mean_{i < m_{n+1}} K_i^T (K_i x_n - z_i)``.

    ``recomputeAll`` sums the per-sample gradients in record order at every
    call. ``incremental`` exploits that every ``K_i`` is Fourier-diagonal and
    keeps the running sums ``sum |r_i|^2`` and ``sum conj(r_i) F z_i``, so each
    record is touched once over a whole run; both agree to rounding error.
    """

    def __init__(
        self,
        stream: ObservationStream,
        batch: PowerLawSchedule,
        cache: CachePolicy | str = CachePolicy.RECOMPUTE_ALL,
    ):
        self.stream = stream
        self.batch = batch
        self.cache = CachePolicy(cache)
        self._reset()

    def _reset(self):
        self._count = 0
        self._sum_rr = None
        self._sum_rz = None

    def batch_for(self, n: int) -> int:
        """Number of records used at iteration ``n`` (``m_{n+1}``)."""
        return batch_size(self.batch, n + 1)

    def __call__(self, x, n: int) -> np.ndarray:
        m = self.batch_for(n)
        x = np.asarray(x, dtype=float)
        if self.cache is CachePolicy.RECOMPUTE_ALL:
            acc = np.zeros_like(x)
            for i in range(m):
                acc += sample_gradient(self.stream, i, x)
            return acc / m
        return self._incremental(x, m)

    def _incremental(self, x, m):
        if m < self._count:
            self._reset()
        if self._sum_rr is None:
            shape = self.stream.cfg.shape
            self._sum_rr = np.zeros(shape)
            self._sum_rz = np.zeros(shape, dtype=complex)
        for i in range(self._count, m):
            K, z = self.stream.observation(i)
            r = K.response
            self._sum_rr += (r * np.conj(r)).real
            self._sum_rz += np.conj(r) * np.fft.fft2(z)
        self._count = m
        u = np.fft.ifft2(self._sum_rr * np.fft.fft2(x) - self._sum_rz).real
        return u / m


def _gradient_symbol(cfg: DegradationConfig) -> np.ndarray:
    b = nominal_blur_response(cfg).response
    return cfg.keep_prob * (b * np.conj(b)).real


def exact_gradient(cfg: DegradationConfig, xbar, x) -> np.ndarray:
    """Closed-form ``grad h(x) = C (x - xbar)``, ``C`` Fourier-diagonal with
    symbol ``keep_prob * |b|^2`` (the zero-mean noise drops out)."""
    d = np.asarray(x, dtype=float) - np.asarray(xbar, dtype=float)
    return np.fft.ifft2(_gradient_symbol(cfg) * np.fft.fft2(d)).real


def gradient_lipschitz(cfg: DegradationConfig) -> float:
    """Lipschitz constant ``1/mu`` of ``grad h``."""
    return float(np.max(_gradient_symbol(cfg)))


class ExactGradientOracle:
    def __init__(self, cfg: DegradationConfig, xbar):
        self.cfg = cfg
        self.xbar = np.asarray(xbar, dtype=float)
        self._symbol = _gradient_symbol(cfg)

    @property
    def lipschitz(self) -> float:
        return float(np.max(self._symbol))

    def __call__(self, x, n: int = 0) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.xbar
        return np.fft.ifft2(self._symbol * np.fft.fft2(d)).real

    def batch_for(self, n: int) -> None:
        return None


# ---------------------------------------------------------------------------
# error injectors


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


class NormScheduledError:
    """Additive error of norm exactly ``schedule(n)`` in a seeded random
    direction; used for the prox errors ``a_n``, ``b_n`` and ``c_{k,n}``."""

    def __init__(self, schedule: PowerLawSchedule, seed: int = 0):
        self.schedule = schedule
        self.seed = seed

    def __call__(self, n: int, shape) -> np.ndarray | None:
        size = self.schedule(n)
        if size == 0:
            return None
        d = _rng(self.seed, n).standard_normal(shape)
        return d * (size / norm(d))


class GradientErrorInjector:
    """Bias plus zero-mean noise on top of an exact gradient.

    At iteration ``n`` the bias has norm ``bias(n)`` (fixed direction per
    ``n``) and the noise is isotropic Gaussian with
    ``E||noise||^2 = relative_variance * ||g - g_ref||^2 + variance(n)``.
    """

    def __init__(
        self,
        bias: PowerLawSchedule,
        variance: PowerLawSchedule,
        relative_variance: float = 0.0,
        seed: int = 0,
    ):
        if relative_variance < 0:
            raise ValueError("relative_variance must be >= 0")
        self.bias = bias
        self.variance = variance
        self.relative_variance = relative_variance
        self.seed = seed

    def noise_bound(self, true_grad, ref_grad, n: int) -> float:
        excess = 0.0
        if self.relative_variance:
            diff = np.asarray(true_grad) - (0.0 if ref_grad is None else np.asarray(ref_grad))
            excess = self.relative_variance * norm(diff) ** 2
        return excess + self.variance(n)

    def inject(self, true_grad, ref_grad=None, n: int = 0, draw: int = 0) -> np.ndarray:
        return inject_gradient_error(self, true_grad, ref_grad, n, draw)


def inject_gradient_error(injector, true_grad, ref_grad=None, n: int = 0, draw: int = 0):
    g = np.asarray(true_grad, dtype=float)
    out = g.copy()
    b = injector.bias(n)
    if b:
        d = _rng(injector.seed, n, 0).standard_normal(g.shape)
        out += d * (b / norm(d))
    s2 = injector.noise_bound(g, ref_grad, n)
    if s2:
        out += np.sqrt(s2 / g.size) * _rng(injector.seed, n, 1, draw).standard_normal(g.shape)
    return out


def with_injected_error(grad, injector: GradientErrorInjector, ref_grad=None):
    """Wrap an exact oracle ``grad(x, n)`` so that it returns perturbed gradients."""

    def oracle(x, n):
        return injector.inject(grad(x, n), ref_grad, n)

    oracle.batch_for = getattr(grad, "batch_for", lambda n: None)
    return oracle
