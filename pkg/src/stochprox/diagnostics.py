"""Image quality metrics and trace post-processing."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SNRReport",
    "snr",
    "residual_curve",
    "write_trace_csv",
    "read_trace_csv",
    "write_curve_csv",
    "TRACE_HEADER",
]

SNR_CAP_DB = 300.0
ERROR_FLOOR = 1e-30
TRACE_HEADER = ("n", "lambda", "m", "step_change", "residual_to_final", "snr", "wall_ms")


@dataclass(frozen=True)
class SNRReport:
    snr_db: float
    signal_energy: float
    error_energy: float
    capped: bool

    def __float__(self):
        return self.snr_db


def snr(reference, estimate) -> SNRReport:
    """``10 log10(||ref||^2 / ||est - ref||^2)`` in dB, capped at 300 dB.

    Signals are not mean-removed.
    """
    ref = np.asarray(reference, dtype=float)
    est = np.asarray(estimate, dtype=float)
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {est.shape}")
    signal = float(np.sum(ref * ref))
    if signal == 0:
        raise ValueError("reference signal is identically zero")
    diff = est - ref
    error = float(np.sum(diff * diff))
    if error <= ERROR_FLOOR:
        return SNRReport(SNR_CAP_DB, signal, error, True)
    value = 10.0 * math.log10(signal / error)
    if value > SNR_CAP_DB:
        return SNRReport(SNR_CAP_DB, signal, error, True)
    return SNRReport(value, signal, error, False)


def residual_curve(trace, x_final):
    """``[(n, ||x_n - x_final||)]`` over the iterates checkpointed in ``trace``.

    The final iterate stands in for the limit, so the last entry is 0.
    """
    snaps = getattr(trace, "snapshots", None)
    if not snaps:
        stride = getattr(trace, "stride", None)
        raise ValueError(
            f"trace holds no iterate snapshots (checkpoint stride={stride}); "
            "rerun with a positive stride"
        )
    x_final = np.asarray(x_final, dtype=float)
    out = []
    for n in sorted(snaps):
        d = snaps[n] - x_final
        out.append((n, float(np.sqrt(np.sum(d * d)))))
    return out


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    return "" if math.isnan(value) else repr(value)


def write_trace_csv(path: str | os.PathLike, trace, wall_clock: bool = True) -> None:
    """One line per iteration. ``residual_to_final`` is the distance of the
    post-step iterate ``x_{n+1}`` to the final one, blank between checkpoints."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in trace.rows:
            w.writerow(
                [
                    _fmt(r.n),
                    _fmt(r.lam),
                    _fmt(r.m),
                    _fmt(r.step_change),
                    _fmt(r.residual_to_final),
                    _fmt(r.snr),
                    _fmt(r.wall_ms) if wall_clock else "",
                ]
            )


def read_trace_csv(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header {reader.fieldnames}")
        return [
            {k: (float(v) if v != "" else math.nan) for k, v in row.items()} for row in reader
        ]


def write_curve_csv(path: str | os.PathLike, curve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("n", "residual"))
        for n, r in curve:
            w.writerow((n, repr(float(r))))
