"""Linear operators on 2-D images: forward-difference gradient and
Fourier-diagonal (circular convolution) operators, plus power iteration.

Images are ``(height, width)`` float arrays. Gradient fields are
``(2, height, width)`` arrays: plane 0 holds horizontal differences (along a
row), plane 1 vertical differences (along a column).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .prox import norm

__all__ = [
    "DiscreteGradient",
    "FrequencyOperator",
    "IdentityOperator",
    "ZeroOperator",
    "grad_apply",
    "grad_adjoint",
    "freq_apply",
    "freq_adjoint",
    "estimate_norm_squared",
    "is_conjugate_symmetric",
]

logger = logging.getLogger(__name__)

#: relative tolerance for the conjugate-symmetry check and imaginary residue
REALNESS_TOL = 1e-10


@dataclass(frozen=True)
class DiscreteGradient:
    """Forward differences with Neumann boundary (zero difference at the last
    column / row). Maps ``R^(H x W)`` to ``R^(2 x H x W)``."""

    width: int
    height: int
    boundary: str = "neumann"

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("width and height must be >= 1")
        if self.boundary != "neumann":
            raise ValueError(f"unsupported boundary {self.boundary!r}")

    @property
    def domain_shape(self):
        return (self.height, self.width)

    @property
    def range_shape(self):
        return (2, self.height, self.width)

    def apply(self, x):
        return grad_apply(self, x)

    def adjoint(self, y):
        return grad_adjoint(self, y)


def _check_shape(arr, shape, what):
    arr = np.asarray(arr, dtype=float)
    if arr.shape != tuple(shape):
        raise ValueError(f"{what} has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def grad_apply(L: DiscreteGradient, x):
    x = _check_shape(x, L.domain_shape, "image")
    out = np.zeros(L.range_shape)
    out[0, :, :-1] = x[:, 1:] - x[:, :-1]
    out[1, :-1, :] = x[1:, :] - x[:-1, :]
    return out


def grad_adjoint(L: DiscreteGradient, y):
    """Negative divergence, the exact transpose of :func:`grad_apply`."""
    y = _check_shape(y, L.range_shape, "gradient field")
    h, v = y[0], y[1]
    out = np.zeros(L.domain_shape)
    out[:, :-1] -= h[:, :-1]
    out[:, 1:] += h[:, :-1]
    out[:-1, :] -= v[:-1, :]
    out[1:, :] += v[:-1, :]
    return out


def _mirror(arr):
    """``arr[(-i) % H, (-j) % W]``, the DFT index involution."""
    return np.roll(arr[::-1, ::-1], shift=(1, 1), axis=(0, 1))


def is_conjugate_symmetric(response, tol: float = REALNESS_TOL) -> bool:
    response = np.asarray(response)
    scale = max(float(np.max(np.abs(response))), 1.0)
    return bool(np.max(np.abs(response - np.conj(_mirror(response)))) <= tol * scale)


@dataclass(frozen=True, eq=False)
class FrequencyOperator:
    """``x -> real(F^-1 (response * F x))`` for a conjugate-symmetric response."""

    response: np.ndarray
    _check: bool = field(default=True, repr=False)

    def __post_init__(self):
        r = np.asarray(self.response, dtype=complex)
        if r.ndim != 2:
            raise ValueError("response must be a 2-D array")
        if self._check and not is_conjugate_symmetric(r):
            raise ValueError("frequency response is not conjugate-symmetric")
        r.setflags(write=False)
        object.__setattr__(self, "response", r)

    @property
    def height(self) -> int:
        return self.response.shape[0]

    @property
    def width(self) -> int:
        return self.response.shape[1]

    @property
    def domain_shape(self):
        return self.response.shape

    range_shape = domain_shape

    def apply(self, x):
        return freq_apply(self, x)

    def adjoint(self, x):
        return freq_adjoint(self, x)

    def norm_squared(self) -> float:
        return float(np.max(np.abs(self.response) ** 2))


def _fourier_multiply(response, x):
    out = np.fft.ifft2(response * np.fft.fft2(x))
    residue = norm(out.imag)
    if residue > REALNESS_TOL * norm(x):
        raise ValueError(f"imaginary residue {residue:.3g} exceeds tolerance")
    return out.real


def freq_apply(K: FrequencyOperator, x):
    x = _check_shape(x, K.domain_shape, "image")
    return _fourier_multiply(K.response, x)


def freq_adjoint(K: FrequencyOperator, x):
    x = _check_shape(x, K.domain_shape, "image")
    return _fourier_multiply(np.conj(K.response), x)


class IdentityOperator:
    def __init__(self, shape):
        self.domain_shape = self.range_shape = tuple(shape)

    def apply(self, x):
        return np.array(x, dtype=float)

    adjoint = apply


class ZeroOperator:
    def __init__(self, domain_shape, range_shape):
        self.domain_shape = tuple(domain_shape)
        self.range_shape = tuple(range_shape)

    def apply(self, x):
        return np.zeros(self.range_shape)

    def adjoint(self, y):
        return np.zeros(self.domain_shape)


def estimate_norm_squared(op, iterations: int = 500, seed: int = 0, safety: float = 1.0) -> float:
    """Power iteration on ``op^T op``; returns ``safety * ||op||^2`` (estimate).

    The Rayleigh quotient of a power iterate never exceeds the true value and
    is nondecreasing in ``iterations``, so ``safety > 1`` gives an upper bound
    margin. A zero operator returns 0.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    x = np.random.default_rng(seed).standard_normal(op.domain_shape)
    x /= norm(x)
    estimate = 0.0
    for _ in range(iterations):
        ax = op.apply(x)
        estimate = max(estimate, norm(ax) ** 2)
        x = op.adjoint(ax)
        nx = norm(x)
        if nx == 0:
            return 0.0
        x /= nx
    estimate = max(estimate, norm(op.apply(x)) ** 2)
    logger.debug("power iteration: ||op||^2 ~ %.8g after %d iterations", estimate, iterations)
    return safety * estimate
