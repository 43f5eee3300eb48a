"""Flat ``key=value`` run configuration for the command-line tool.

Blank lines and lines starting with ``#`` are ignored. Unknown keys are
errors. Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .degradation import DegradationConfig

__all__ = ["RunConfig", "ConfigError", "parse_config", "load_config", "format_config"]


class ConfigError(ValueError):
    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        where = ""
        if path is not None:
            where = f"{path}:{lineno}: " if lineno is not None else f"{path}: "
        super().__init__(where + message)


@dataclass
class RunConfig:
    image: str = "synthetic"
    outDir: str = "out"
    manifest: Optional[str] = None
    masterSeed: int = 0
    width: int = 64
    height: int = 64
    blurSize: int = 5
    keepProb: float = 0.3
    noiseSigma: float = 5.0
    tvWeight: float = 0.5
    boxLo: float = 0.0
    boxHi: float = 255.0
    rho: Optional[float] = None
    sigma: Optional[float] = None
    theta: float = 1.0
    lambdaPivot: float = 500.0
    lambdaExp: float = 0.95
    batchExp: float = 1.1
    maxIterations: int = 2000
    checkpointStride: int = 10
    relTol: Optional[float] = 1e-6
    patience: int = 10
    normIterations: int = 500
    cachePolicy: str = "incremental"
    count: int = 100
    previews: int = 2
    recordWallClock: bool = False

    def degradation(self) -> DegradationConfig:
        return DegradationConfig(
            width=self.width,
            height=self.height,
            blur_size=self.blurSize,
            keep_prob=self.keepProb,
            noise_sigma=self.noiseSigma,
            master_seed=self.masterSeed,
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_PATH_KEYS = ("image", "outDir", "manifest")


def _field_types():
    hints = {}
    for f in fields(RunConfig):
        t = str(f.type)
        optional = t.startswith("Optional[")
        base = t[len("Optional[") : -1] if optional else t
        hints[f.name] = (base, optional)
    return hints


_TYPES = _field_types()


def _convert(key, raw):
    base, optional = _TYPES[key]
    if optional and raw.lower() in ("", "none"):
        return None
    if base == "int":
        return int(raw)
    if base == "float":
        return float(raw)
    if base == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(raw)
    return raw


def parse_config(text: str, path: Optional[str] = None, base_dir=None) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, eq, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if not eq:
            raise ConfigError(f"expected key=value, got {stripped!r}", path, lineno)
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r}", path, lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", path, lineno)
        try:
            values[key] = _convert(key, raw)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}", path, lineno) from None
    cfg = RunConfig(**values)
    if base_dir is not None:
        cfg = resolve_paths(cfg, base_dir)
    return cfg


def resolve_paths(cfg: RunConfig, base_dir) -> RunConfig:
    base = Path(base_dir)
    changes = {}
    for key in _PATH_KEYS:
        value = getattr(cfg, key)
        if value is None or (key == "image" and value == "synthetic"):
            continue
        changes[key] = str((base / value).resolve())
    return cfg.replace(**changes)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path), base_dir=path.parent)


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(cfg: RunConfig) -> str:
    return "".join(f"{f.name}={_fmt(getattr(cfg, f.name))}\n" for f in fields(RunConfig))


def write_config(cfg: RunConfig, path: str | os.PathLike) -> None:
    Path(path).write_text(format_config(cfg), encoding="utf-8")
