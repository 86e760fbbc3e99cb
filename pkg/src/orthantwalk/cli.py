"""Command-line entry point.

Subcommands: validate, green, harmonic, convergence, ratio, ldrate,
renewal, metric, mc.  Global flags --config/--out/--seed/--tol; the
process exits 0 only when every verdict of the invoked command passes.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .errors import ValidationError
from .experiments import (ExperimentConfig, ld_rate_scan, martin_convergence,
                          martin_metric, ratio_limit_scan,
                          renewal_dominance_scan)
from .genfun import GenFun
from .green import green_table, window_around
from .harmonic import build_corollary
from .measures import WalkSpec, killed_walk, lambda_of, load_measure, validate
from .montecarlo import EVENT_FINITE, estimate_exit_functional


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orthantwalk",
                                description="killed-walk Green/harmonic toolkit")
    p.add_argument("--config", help="JSON experiment configuration file")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--tol", type=float, help="override the config tolerance")
    p.add_argument("command", choices=[
        "validate", "green", "harmonic", "convergence", "ratio", "ldrate",
        "renewal", "metric", "mc"])
    return p


def _load(args) -> ExperimentConfig:
    if not args.config:
        raise ValidationError("this command needs --config")
    cfg = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.tol is not None:
        cfg.tol = args.tol
    return cfg


def _scan_command(fn, cfg, out):
    measure = load_measure(cfg.measure_path)
    report = fn(measure, cfg)
    if out:
        report.to_csv(out)
    for row in report.rows:
        print(f"n={row['n']:>5}  measured={row['measured']:+.6e}  "
              f"reference={row['reference']:+.6e}  deviation={row['deviation']:.3e}")
    print(f"verdict: {'PASS' if report.verdict else 'FAIL'}  ({report.summary})")
    return 0 if report.verdict else 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    cfg = _load(args)
    measure = load_measure(cfg.measure_path)

    if args.command == "validate":
        report = validate(measure)
        print(f"mean: {np.array2string(measure.mean, precision=6)}")
        print(f"zero-mean coordinates: {sorted(report.lambda_of_mean)}")
        for lam, ok in sorted(report.a1_irreducible.items(), key=lambda kv: sorted(kv[0])):
            print(f"A1 on kill set {sorted(lam)}: {'ok' if ok else 'NOT CERTIFIED'}")
        print(f"A2 finite generating function: {report.a2_finite}")
        print(f"A3 non-zero mean: {report.a3_nonzero_mean}")
        print(f"A4 axis moves on zero-mean coordinates: {report.a4_axis_jumps_on_lambda_m}")
        print(f"A4' axis-only jumps: {report.a4prime_axis_jumps}")
        return 0 if report.ok else 1

    if args.command == "green":
        lam = frozenset(cfg.lam) if cfg.lam is not None else frozenset(range(measure.dim))
        spec = WalkSpec(measure, lam)
        x = tuple(cfg.x)
        box = window_around(spec, [x], cfg.box_pad)
        table = green_table(spec, x, box, tol=cfg.tol)
        if args.out:
            table.to_csv(args.out)
        print(f"G({x}, {x}) = {table.value(x)!r}  trunc_error = {table.trunc_error:.3e}")
        return 0

    if args.command == "harmonic":
        spec = killed_walk(measure)
        q = np.asarray(cfg.q, dtype=float)
        q = q / np.linalg.norm(q)
        box = window_around(spec, [tuple(cfg.x or [1] * measure.dim)], cfg.box_pad)
        h = build_corollary(spec, q, box, tol=min(cfg.tol, 1e-10))
        if args.out:
            h.to_csv(args.out)
        from .harmonic import verify_harmonic, verify_positive
        resid = verify_harmonic(h, spec, h.verified_region)
        mini = verify_positive(h, h.verified_region)
        print(f"{h.provenance}: residual {resid:.2e}, minimum {mini:.4e}")
        return 0 if (resid <= 1e-7 and mini > 0) else 1

    if args.command == "convergence":
        return _scan_command(martin_convergence, cfg, args.out)
    if args.command == "ratio":
        return _scan_command(ratio_limit_scan, cfg, args.out)
    if args.command == "ldrate":
        return _scan_command(ld_rate_scan, cfg, args.out)
    if args.command == "renewal":
        return _scan_command(renewal_dominance_scan, cfg, args.out)

    if args.command == "metric":
        spec = killed_walk(measure)
        res = martin_metric(spec, tuple(cfg.y), tuple(cfg.y2),
                            tuple(cfg.x0), probe_size=cfg.probe_size, tol=cfg.tol)
        print(f"d_M = {res.value!r}  (+remainder bound {res.remainder:.3e}, "
              f"{res.probe_points} probe points)")
        return 0

    if args.command == "mc":
        lam = frozenset(cfg.lam) if cfg.lam is not None else frozenset(range(measure.dim))
        spec = WalkSpec(measure, lam)
        est = estimate_exit_functional(
            spec, tuple(cfg.x), lambda pts: np.ones(len(pts)), EVENT_FINITE,
            cfg.n_paths, cfg.horizon, cfg.seed)
        print(f"P(tau < inf) ~ {est.mean:.6f} +- {est.std_error:.6f}  "
              f"(n={est.n_samples}, censored {est.censored_fraction:.2%}, seed {est.seed})")
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write("mean,std_error,n,censored_fraction,seed\n")
                fh.write(f"{est.mean!r},{est.std_error!r},{est.n_samples},"
                         f"{est.censored_fraction!r},{est.seed}\n")
        return 0

    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
