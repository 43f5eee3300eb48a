"""Command-line entry point: ``stochprox {simulate,restore,validate,bench}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .config import ConfigError, RunConfig, load_config, write_config
from .degradation import (
    ManifestError,
    StreamExhausted,
    make_record,
    read_manifest,
    sample_observation,
    write_manifest,
)
from .diagnostics import residual_curve, snr, write_curve_csv, write_trace_csv
from .fileio import FormatError, read_pgm, write_pgm, write_spf
from .oracles import gradient_lipschitz
from .prox import BoxConstraint
from .restoration import NORM_SAFETY, build_restoration, default_steps, synthetic_image
from .linops import DiscreteGradient, estimate_norm_squared
from .schedules import (
    PDStepsizeConfig,
    PowerLawSchedule,
    pd_stepsize_margin,
    validate_fb_conditions,
    validate_online_schedules,
)
from .solvers import DivergenceError, StoppingRule, kkt_residual, pd_solve

logger = logging.getLogger("stochprox")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class CommandError(RuntimeError):
    pass


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if getattr(args, "out", None):
        changes["outDir"] = str(Path(args.out).resolve())
    elif not args.config:
        changes["outDir"] = str(Path(cfg.outDir).resolve())
    if getattr(args, "seed", None) is not None:
        changes["masterSeed"] = args.seed
    if getattr(args, "iters", None) is not None:
        changes["maxIterations"] = args.iters
    if getattr(args, "stride", None) is not None:
        changes["checkpointStride"] = args.stride
    if getattr(args, "count", None) is not None:
        changes["count"] = args.count
    cfg = cfg.replace(**changes)
    return _with_image_shape(cfg)


def _with_image_shape(cfg: RunConfig) -> RunConfig:
    if cfg.image == "synthetic":
        return cfg
    img = _read_image(cfg)
    return cfg.replace(height=img.shape[0], width=img.shape[1])


def _read_image(cfg: RunConfig) -> np.ndarray:
    if cfg.image == "synthetic":
        return synthetic_image(cfg.width, cfg.height)
    try:
        return read_pgm(cfg.image)
    except OSError as exc:
        raise CommandError(f"cannot read image {cfg.image}: {exc.strerror}") from None
    except FormatError as exc:
        raise CommandError(str(exc)) from None


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.outDir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CommandError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(cfg: RunConfig) -> int:
    dcfg = cfg.degradation()
    xbar = _read_image(cfg)
    out = _outdir(cfg)
    records = [make_record(dcfg, n) for n in range(cfg.count)]
    write_manifest(out / "manifest.txt", dcfg, records)
    print(f"wrote {out / 'manifest.txt'} ({len(records)} records)")
    write_pgm(out / "original.pgm", xbar)
    for n in range(min(cfg.previews, cfg.count)):
        _, z = sample_observation(dcfg, xbar, n)
        path = out / f"degraded_{n}.pgm"
        write_pgm(path, z)
        write_spf(out / f"degraded_{n}.spf", z)
        print(f"degraded {n}: SNR = {snr(xbar, z).snr_db:.2f} dB -> {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate / restore


def _steps_for(cfg: RunConfig):
    """``(PDStepsizeConfig, resolved rho, resolved sigma)`` for the run."""
    dcfg = cfg.degradation()
    mu = 1.0 / gradient_lipschitz(dcfg)
    norm_sq = estimate_norm_squared(
        DiscreteGradient(cfg.width, cfg.height), iterations=cfg.normIterations, safety=NORM_SAFETY
    )
    rho, sigma = default_steps(mu, norm_sq, cfg.theta, cfg.sigma)
    if cfg.rho is not None:
        rho = cfg.rho
    return PDStepsizeConfig(rho, (sigma,), (norm_sq,), mu)


def condition_report(cfg: RunConfig, steps: PDStepsizeConfig):
    """Text report and overall verdict for the run's convergence hypotheses."""
    margin = pd_stepsize_margin(steps)
    pd_ok = margin > 0.5
    delta, kappa = cfg.batchExp - 1.0, cfg.lambdaExp
    try:
        online_ok = validate_online_schedules(delta, kappa)
    except ValueError:
        online_ok = False
    lam = PowerLawSchedule.saturating(cfg.lambdaExp, cfg.lambdaPivot)
    fb = validate_fb_conditions(
        PowerLawSchedule.constant(steps.rho), lam, PowerLawSchedule.constant(0.0), steps.mu
    )
    lines = [
        "[primal-dual step sizes]",
        f"rho = {steps.rho!r}",
        f"sigma = {steps.sigmas[0]!r}",
        f"norm_squared = {steps.operator_norm_squares[0]!r}",
        f"mu = {steps.mu!r}",
        f"margin = (1/rho - sigma*norm_squared)*mu = {margin!r} (needs > 0.5)",
        f"pd_verdict = {pd_ok}",
        "",
        "[online schedules]",
        f"batch m_n = n^{cfg.batchExp} (delta = {delta:.6g}), relaxation exponent kappa = {kappa}",
        f"online_verdict = {online_ok}",
        "",
        "[forward-backward view: gamma = rho, vartheta = mu, tau = 0]",
        fb.render(),
    ]
    ok = pd_ok and online_ok and fb.overall
    lines += ["", f"verdict = {ok}"]
    return "\n".join(lines) + "\n", ok


def cmd_validate(cfg: RunConfig) -> int:
    text, ok = condition_report(cfg, _steps_for(cfg))
    print(text, end="")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_restore(cfg: RunConfig, force: bool = False) -> int:
    dcfg = cfg.degradation()
    xbar = _read_image(cfg)
    out = _outdir(cfg)
    records = None
    if cfg.manifest:
        try:
            mcfg, records = read_manifest(cfg.manifest)
        except OSError as exc:
            raise CommandError(f"cannot read manifest {cfg.manifest}: {exc.strerror}") from None
        except ManifestError as exc:
            raise CommandError(str(exc)) from None
        if mcfg != dcfg:
            raise CommandError(f"manifest {cfg.manifest} was written for {mcfg}, run uses {dcfg}")

    steps = _steps_for(cfg)
    resolved = cfg.replace(rho=steps.rho, sigma=steps.sigmas[0])
    write_config(resolved, out / "resolved.cfg")
    report, ok = condition_report(resolved, steps)
    (out / "conditions.txt").write_text(report, encoding="utf-8")
    if not ok:
        if not force:
            print(report, end="", file=sys.stderr)
            raise CommandError("convergence conditions fail; rerun with --force to override")
        logger.warning("convergence conditions fail; continuing because of --force")

    setup = build_restoration(
        dcfg,
        xbar,
        tv_weight=cfg.tvWeight,
        box=BoxConstraint(cfg.boxLo, cfg.boxHi),
        lambda_pivot=cfg.lambdaPivot,
        lambda_exp=cfg.lambdaExp,
        batch_exp=cfg.batchExp,
        rho=steps.rho,
        sigma=steps.sigmas[0],
        cache=cfg.cachePolicy,
        norm_iterations=cfg.normIterations,
        records=records,
    )
    x0 = setup.initial_point()
    stop = StoppingRule(cfg.maxIterations, rel_tol=cfg.relTol, patience=cfg.patience)
    try:
        x, v, trace = pd_solve(
            setup.problem,
            x0,
            None,
            stop,
            truth=xbar,
            stride=cfg.checkpointStride,
            force=True,
            wall_clock=cfg.recordWallClock,
        )
    except (DivergenceError, StreamExhausted) as exc:
        trace = getattr(exc, "trace", None)
        if trace is not None:
            write_trace_csv(out / "trace.csv", trace, wall_clock=cfg.recordWallClock)
            last = max(trace.snapshots) if trace.snapshots else None
            if last is not None:
                write_spf(out / "partial.spf", trace.snapshots[last])
        raise CommandError(f"restoration aborted: {exc}") from None

    write_pgm(out / "restored.pgm", x)
    write_spf(out / "restored.spf", x)
    write_trace_csv(out / "trace.csv", trace, wall_clock=cfg.recordWallClock)
    if trace.snapshots:
        write_curve_csv(out / "residual.csv", residual_curve(trace, x))

    dcfg_previews = [snr(xbar, sample_observation(dcfg, xbar, n)[1]).snr_db for n in range(cfg.previews)]
    summary = [
        f"iterations = {len(trace.rows)}",
        f"stopped = {trace.metadata.get('stopped')}",
        f"snr_initial_db = {snr(xbar, x0).snr_db!r}",
        f"snr_restored_db = {snr(xbar, x).snr_db!r}",
        f"kkt_residual = {kkt_residual(setup.problem, x, v)!r}",
    ]
    summary += [f"snr_degraded_{n}_db = {s!r}" for n, s in enumerate(dcfg_previews)]
    summary += [f"warning = {w}" for w in trace.warnings]
    (out / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    print("\n".join(summary))
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def cmd_bench(suite: str) -> int:
    names = sorted(bench_mod.SUITES) if suite == "all" else [suite]
    failed = 0
    print(f"{'suite':<14} {'check':<28} {'status':<6} detail")
    for name in names:
        checks, seconds = bench_mod.run_suite(name)
        for c in checks:
            failed += not c.passed
            print(f"{name:<14} {c.name:<28} {'PASS' if c.passed else 'FAIL':<6} {c.detail}")
        print(f"{name:<14} {'(runtime)':<28} {'':<6} {seconds:.2f} s")
    return EXIT_OK if failed == 0 else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochprox", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value run configuration file")
        p.add_argument("--out", help="output directory (overrides outDir)")
        p.add_argument("--seed", type=int, help="master seed (overrides masterSeed)")

    p = sub.add_parser("simulate", help="write an observation manifest and degraded previews")
    common(p)
    p.add_argument("--count", type=int, help="number of records (overrides count)")

    p = sub.add_parser("restore", help="run the online primal-dual restoration")
    common(p)
    p.add_argument("--iters", type=int, help="iteration budget (overrides maxIterations)")
    p.add_argument("--stride", type=int, help="checkpoint stride (overrides checkpointStride)")
    p.add_argument("--force", action="store_true", help="run even if conditions fail")

    p = sub.add_parser("validate", help="check the convergence conditions of a config")
    common(p)

    p = sub.add_parser("bench", help="run a built-in self-check suite")
    p.add_argument("suite", help="one of: " + ", ".join(sorted(bench_mod.SUITES)) + ", all")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if args.command == "bench" and args.suite != "all" and args.suite not in bench_mod.SUITES:
        parser.error(f"unknown suite {args.suite!r}")
    try:
        if args.command == "bench":
            return cmd_bench(args.suite)
        cfg = _load(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "validate":
            return cmd_validate(cfg)
        return cmd_restore(cfg, force=args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
