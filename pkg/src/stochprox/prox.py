"""Proximity operators for the box constraint and the isotropic TV norm.

Every prox here follows the calling convention ``prox(x, gamma)`` and returns
``argmin_y f(y) + ||x - y||^2 / (2 gamma)``. Group layout for ``(2, H, W)``
gradient fields: the groups are the per-pixel pairs ``(x[0, i, j], x[1, i, j])``,
i.e. a flat vector of length ``k * N`` is read as ``k`` stacked planes.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

import numpy as np

from .schedules import PowerLawSchedule

__all__ = [
    "BoxConstraint",
    "GroupShrinkSpec",
    "PerturbationMode",
    "ProxPerturbation",
    "prox_box",
    "prox_group_l2",
    "project_group_l2_ball",
    "prox_conjugate",
    "perturbed_prox",
    "norm",
]


def norm(x) -> float:
    # pairwise summation: independent of BLAS threading
    x = np.asarray(x)
    return float(np.sqrt(np.sum(x * x)))


@dataclass(frozen=True)
class BoxConstraint:
    """Indicator of ``[lo, hi]^N``."""

    lo: float = 0.0
    hi: float = 255.0

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty box: lo={self.lo} > hi={self.hi}")

    def value(self, x) -> float:
        x = np.asarray(x)
        return 0.0 if np.all((x >= self.lo) & (x <= self.hi)) else np.inf

    def prox(self, x, gamma: float = 1.0):
        return prox_box(x, self)


def prox_box(x, box: BoxConstraint):
    """Projection onto the box; the scale ``gamma`` of an indicator is irrelevant."""
    return np.clip(x, box.lo, box.hi)


def _as_groups(x, group_size: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if group_size < 1 or x.size % group_size:
        raise ValueError(
            f"array of size {x.size} does not split into groups of size {group_size}"
        )
    return x.reshape(group_size, -1)


def _group_norms(g: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(g * g, axis=0))


@dataclass(frozen=True)
class GroupShrinkSpec:
    """``weight * sum_groups ||group||_2`` (the isotropic TV norm for ``group_size=2``)."""

    group_size: int = 2
    weight: float = 0.5

    def __post_init__(self):
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if self.weight < 0:
            raise ValueError("weight must be >= 0")

    def value(self, x) -> float:
        return self.weight * float(np.sum(_group_norms(_as_groups(x, self.group_size))))

    def prox(self, x, gamma: float = 1.0):
        return prox_group_l2(x, gamma, self)

    def conjugate_prox(self, x, sigma: float = 1.0):
        """Prox of the conjugate: projection onto the radius-``weight`` group ball."""
        return project_group_l2_ball(x, self.weight, self.group_size)


def prox_group_l2(x, gamma: float, spec: GroupShrinkSpec):
    """Group soft-thresholding with threshold ``gamma * spec.weight``."""
    shape = np.shape(x)
    g = _as_groups(x, spec.group_size)
    thresh = gamma * spec.weight
    if thresh == 0:
        return g.reshape(shape).copy()
    nrm = _group_norms(g)
    scale = np.zeros_like(nrm)
    keep = nrm > thresh
    scale[keep] = 1.0 - thresh / nrm[keep]
    return (g * scale).reshape(shape)


def project_group_l2_ball(x, radius: float, group_size: int = 2):
    shape = np.shape(x)
    g = _as_groups(x, group_size)
    nrm = _group_norms(g)
    scale = np.ones_like(nrm)
    out = nrm > radius
    scale[out] = radius / nrm[out]
    return (g * scale).reshape(shape)


def prox_conjugate(prox_primal, sigma: float, x):
    """Moreau decomposition: ``prox_{sigma g*}(x) = x - sigma prox_{g/sigma}(x/sigma)``.

    ``prox_primal(v, gamma)`` must be the exact prox of ``gamma * g``.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    x = np.asarray(x, dtype=float)
    return x - sigma * prox_primal(x / sigma, 1.0 / sigma)


# ---------------------------------------------------------------------------
# approximate prox  f_n ~ f


class PerturbationMode(str, enum.Enum):
    OFF = "off"
    SCALED_SHIFT = "scaledShift"


@dataclass(frozen=True)
class ProxPerturbation:
    """Synthetic inexact prox with ``||prox_n(x) - prox(x)|| <= alpha_n ||x|| + beta_n``.

    In ``scaledShift`` mode the exact output is moved by exactly that radius
    along a pseudo-random unit direction keyed by ``(seed, n, x)``. If ``box``
    is given the result is projected back into it, which can only shrink the
    displacement since the exact output already lies in the box.
    """

    alpha: PowerLawSchedule
    beta: PowerLawSchedule
    mode: PerturbationMode = PerturbationMode.SCALED_SHIFT
    seed: int = 0
    box: BoxConstraint | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", PerturbationMode(self.mode))

    def radius(self, n: int, x) -> float:
        return self.alpha(n) * norm(x) + self.beta(n)


def _direction(seed: int, n: int, x: np.ndarray) -> np.ndarray:
    digest = hashlib.blake2b(np.ascontiguousarray(x).tobytes(), digest_size=8).digest()
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, n, int.from_bytes(digest, "little")])
    d = np.random.default_rng(ss).standard_normal(x.shape)
    return d / norm(d)


def perturbed_prox(exact, pert: ProxPerturbation | None, n: int, x, gamma: float = 1.0):
    """Evaluate ``prox_{gamma f_n}(x)`` given the exact ``prox_{gamma f}``."""
    p = exact(x, gamma)
    if pert is None or pert.mode is PerturbationMode.OFF:
        return p
    r = pert.radius(n, x)
    if r == 0:
        return p
    x = np.asarray(x, dtype=float)
    p = p + r * _direction(pert.seed, n, x)
    if pert.box is not None:
        p = prox_box(p, pert.box)
    return p
