"""Observation model ``z_n = K_n xbar + e_n`` with a randomly subsampled blur.

``K_n`` keeps each DFT bin of a uniform ``b x b`` box blur with probability
``keep_prob`` and zeroes it otherwise. Bins are kept or dropped together with
their conjugate partner so that ``K_n`` maps real images to real images.
``e_n`` is white Gaussian noise added in the spatial domain.

Each record ``n`` carries two 64-bit seeds derived counter-style from
``(master_seed, n, stream_id)``; a record can therefore be materialized in any
order and on any thread, and equal seeds reproduce ``(K_n, e_n)`` bit for bit.
"""

from __future__ import annotations

import os
from collections import OrderedDict
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .linops import FrequencyOperator, freq_apply

__all__ = [
    "DegradationConfig",
    "ObservationRecord",
    "ObservationStream",
    "StreamExhausted",
    "ManifestError",
    "derive_seed",
    "make_record",
    "nominal_blur_response",
    "sample_operator",
    "operator_from_record",
    "noise_from_record",
    "sample_observation",
    "write_manifest",
    "read_manifest",
]

MASK_STREAM = 0
NOISE_STREAM = 1


@dataclass(frozen=True)
class DegradationConfig:
    width: int
    height: int
    blur_size: int = 5
    keep_prob: float = 0.3
    noise_sigma: float = 5.0
    master_seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("width and height must be >= 1")
        if self.blur_size < 1 or self.blur_size % 2 == 0:
            raise ValueError(f"blur_size must be a positive odd integer, got {self.blur_size}")
        if self.blur_size > min(self.width, self.height):
            raise ValueError("blur_size exceeds the image size")
        if not 0.0 <= self.keep_prob <= 1.0:
            raise ValueError(f"keep_prob must lie in [0, 1], got {self.keep_prob}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")

    @property
    def shape(self):
        return (self.height, self.width)


@dataclass(frozen=True)
class ObservationRecord:
    index: int
    mask_seed: int
    noise_seed: int


class StreamExhausted(IndexError):
    pass


def derive_seed(master_seed: int, n: int, stream_id: int) -> int:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(n, stream_id))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_record(cfg: DegradationConfig, n: int) -> ObservationRecord:
    if n < 0:
        raise ValueError("record index must be >= 0")
    return ObservationRecord(
        n,
        derive_seed(cfg.master_seed, n, MASK_STREAM),
        derive_seed(cfg.master_seed, n, NOISE_STREAM),
    )


@lru_cache(maxsize=16)
def _box_response(height: int, width: int, blur_size: int) -> np.ndarray:
    kernel = np.zeros((height, width))
    r = blur_size // 2
    offs = np.arange(-r, r + 1)
    kernel[np.ix_(offs % height, offs % width)] = 1.0 / blur_size**2
    # the centred kernel is even, so its DFT is real up to rounding
    resp = np.fft.fft2(kernel).real.astype(complex)
    resp.setflags(write=False)
    return resp


def nominal_blur_response(cfg: DegradationConfig) -> FrequencyOperator:
    """Circular, centred, unit-DC-gain ``b x b`` averaging blur."""
    return FrequencyOperator(_box_response(cfg.height, cfg.width, cfg.blur_size))


@lru_cache(maxsize=16)
def _representatives(height: int, width: int) -> np.ndarray:
    idx = np.arange(height * width).reshape(height, width)
    partner = np.roll(idx[::-1, ::-1], shift=(1, 1), axis=(0, 1))
    rep = np.minimum(idx, partner)
    rep.setflags(write=False)
    return rep


def _mask(cfg: DegradationConfig, mask_seed: int) -> np.ndarray:
    u = np.random.default_rng(mask_seed).random(cfg.height * cfg.width)
    # one uniform per conjugate pair; self-conjugate bins are their own representative
    return u[_representatives(cfg.height, cfg.width)] < cfg.keep_prob


def operator_from_record(cfg: DegradationConfig, record: ObservationRecord) -> FrequencyOperator:
    resp = np.where(_mask(cfg, record.mask_seed), _box_response(cfg.height, cfg.width, cfg.blur_size), 0)
    return FrequencyOperator(resp, _check=False)


def noise_from_record(cfg: DegradationConfig, record: ObservationRecord) -> np.ndarray:
    if cfg.noise_sigma == 0:
        return np.zeros(cfg.shape)
    return cfg.noise_sigma * np.random.default_rng(record.noise_seed).standard_normal(cfg.shape)


def sample_operator(cfg: DegradationConfig, n: int) -> FrequencyOperator:
    return operator_from_record(cfg, make_record(cfg, n))


def _observe(cfg, xbar, record):
    xbar = np.asarray(xbar, dtype=float)
    if xbar.shape != cfg.shape:
        raise ValueError(f"image has shape {xbar.shape}, config expects {cfg.shape}")
    K = operator_from_record(cfg, record)
    return K, freq_apply(K, xbar) + noise_from_record(cfg, record)


def sample_observation(cfg: DegradationConfig, xbar, n: int):
    """Return ``(record, z_n)``."""
    record = make_record(cfg, n)
    return record, _observe(cfg, xbar, record)[1]


class ObservationStream:
    """Random-access sequence of ``(K_n, z_n)`` for a fixed ground truth.

    Without ``records`` the stream is unbounded and record ``n`` is derived
    from the master seed; with ``records`` (e.g. from a manifest) it is finite
    and reading past the end raises :class:`StreamExhausted`.
    """

    def __init__(self, cfg: DegradationConfig, xbar, records=None, cache_size: int = 256):
        xbar = np.asarray(xbar, dtype=float)
        if xbar.shape != cfg.shape:
            raise ValueError(f"image has shape {xbar.shape}, config expects {cfg.shape}")
        self.cfg = cfg
        self.xbar = xbar
        self.records = None if records is None else list(records)
        self.cache_size = cache_size
        self._cache: OrderedDict[int, tuple] = OrderedDict()

    def __len__(self):
        if self.records is None:
            raise TypeError("unbounded stream has no length")
        return len(self.records)

    def record(self, n: int) -> ObservationRecord:
        if self.records is None:
            return make_record(self.cfg, n)
        if not 0 <= n < len(self.records):
            raise StreamExhausted(
                f"record {n} requested but the manifest holds {len(self.records)}"
            )
        return self.records[n]

    def observation(self, n: int):
        """``(K_n, z_n)``."""
        hit = self._cache.get(n)
        if hit is not None:
            self._cache.move_to_end(n)
            return hit
        out = _observe(self.cfg, self.xbar, self.record(n))
        if self.cache_size > 0:
            self._cache[n] = out
            if len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return out


# ---------------------------------------------------------------------------
# manifest

_HEADER_KEYS = {
    "width": ("width", int),
    "height": ("height", int),
    "blurSize": ("blur_size", int),
    "keepProb": ("keep_prob", float),
    "noiseSigma": ("noise_sigma", float),
    "masterSeed": ("master_seed", int),
}


class ManifestError(ValueError):
    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


def write_manifest(path: str | os.PathLike, cfg: DegradationConfig, records) -> None:
    records = list(records)
    fields = asdict(cfg)
    lines = [f"{key}={fields[attr]!r}" for key, (attr, _) in _HEADER_KEYS.items()]
    lines.append(f"count={len(records)}")
    lines.extend(f"{r.index} {r.mask_seed} {r.noise_seed}" for r in records)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_manifest(path: str | os.PathLike):
    """Parse a manifest; returns ``(DegradationConfig, list[ObservationRecord])``."""
    with open(path, encoding="ascii") as fh:
        text = fh.read()
    lines = text.split("\n")
    complete = text.endswith("\n")
    if complete:
        lines.pop()
    header: dict = {}
    count = None
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not complete and lineno == len(lines):
            raise ManifestError(path, lineno, "truncated line (missing newline)")
        if count is None:
            key, eq, value = line.partition("=")
            if not eq:
                raise ManifestError(path, lineno, f"expected key=value header, got {line!r}")
            key = key.strip()
            try:
                if key == "count":
                    count = int(value)
                    if count < 0:
                        raise ValueError(value)
                elif key in _HEADER_KEYS:
                    attr, conv = _HEADER_KEYS[key]
                    header[attr] = conv(value)
                else:
                    raise ManifestError(path, lineno, f"unknown header key {key!r}")
            except ValueError as exc:
                if isinstance(exc, ManifestError):
                    raise
                raise ManifestError(path, lineno, f"bad value for {key}: {value!r}") from None
            if count is not None:
                missing = set(a for a, _ in _HEADER_KEYS.values()) - set(header)
                if missing:
                    raise ManifestError(path, lineno, f"header lacks {sorted(missing)}")
                try:
                    cfg = DegradationConfig(**header)
                except ValueError as exc:
                    raise ManifestError(path, lineno, str(exc)) from None
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ManifestError(path, lineno, f"expected 'n maskSeed noiseSeed', got {line!r}")
        try:
            records.append(ObservationRecord(*(int(p) for p in parts)))
        except ValueError:
            raise ManifestError(path, lineno, f"non-integer field in {line!r}") from None
        if len(records) > count:
            raise ManifestError(path, lineno, f"more records than count={count}")
    if count is None:
        raise ManifestError(path, len(lines) + 1, "missing count header")
    if len(records) != count:
        raise ManifestError(
            path, len(lines) + 1, f"expected {count} records, found {len(records)} (truncated)"
        )
    return cfg, records
