"""Command-line entry point.

Subcommands: simulate (Monte Carlo campaigns -> results.csv + errors.csv),
dynamics-scan (phase-law scan -> dynamics.csv), verify-qsim (statevector
oracle suite), crlb (bound table), bench (solve-time table).

Exit codes: 0 success, 1 usage/config error, 2 internal solver failures
above the threshold (or a failed verification).
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import experiment as exp
from . import qdynamics
from .metrics import fisher_trace_inverse
from .util import format_float
from .verify import run_verification

FAILURE_RATE_THRESHOLD = 0.01


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="querloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_campaign_flags(p):
        p.add_argument("--config", type=Path, help="key=value config file")
        p.add_argument("--seed", type=int, help="campaign seed (mandatory)")
        p.add_argument("--out-dir", type=Path, default=Path("."), help="CSV output directory")
        p.add_argument("--m", help="comma-separated ranging counts, e.g. 3,4,5")
        p.add_argument("--rho-max", type=float, help="largest noise level in the grid")
        p.add_argument("--rho-step", type=float, help="noise grid step")
        p.add_argument("--trials", type=int, help="trials per cell")
        p.add_argument("--methods", help="comma-separated method names")
        p.add_argument("--workers", type=int, help="worker processes for trials")

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo campaign")
    add_campaign_flags(p_sim)
    p_sim.add_argument(
        "--experiment", choices=("main", "same-anchor", "mimic"), help="campaign kind"
    )

    p_dyn = sub.add_parser("dynamics-scan", help="scan the quadratic phase law")
    p_dyn.add_argument("--gamma", type=float, default=1e3)
    p_dyn.add_argument("--omega0", type=float, default=1e-2)
    p_dyn.add_argument("--nu-over-hbar", type=float, default=1e10)
    p_dyn.add_argument("--t-max", type=float, help="scan end time (default: gamma t^2 spans 1e-4 rad)")
    p_dyn.add_argument("--points", type=int, default=100_000)
    p_dyn.add_argument("--filter-eps", type=float, help="default sqrt((1-tau)/(tau^2+tau))")
    p_dyn.add_argument("--out-dir", type=Path, default=Path("."))

    p_ver = sub.add_parser("verify-qsim", help="randomized statevector oracle suite")
    p_ver.add_argument("--instances", type=int, default=1000)
    p_ver.add_argument("--seed", type=int, default=2024)
    p_ver.add_argument("--inject-phase-error", type=float, default=0.0, help=argparse.SUPPRESS)

    p_crlb = sub.add_parser("crlb", help="RMSE lower-bound table")
    add_campaign_flags(p_crlb)

    p_bench = sub.add_parser("bench", help="per-method mean solve time")
    add_campaign_flags(p_bench)
    return parser


class UsageError(ValueError):
    pass


def _config_from_args(args, default_trials=None) -> exp.ExperimentConfig:
    kwargs = {}
    if args.config is not None:
        if not args.config.exists():
            raise UsageError(f"config file not found: {args.config}")
        kwargs.update(exp.parse_config_file(args.config))
    if getattr(args, "experiment", None):
        kwargs["experiment_kind"] = args.experiment
    if args.m:
        kwargs["m_list"] = tuple(int(v) for v in args.m.split(","))
    if args.rho_max is not None or args.rho_step is not None:
        rho_max = args.rho_max if args.rho_max is not None else 0.05
        rho_step = args.rho_step if args.rho_step is not None else 0.005
        if rho_step <= 0:
            raise UsageError("--rho-step must be positive")
        count = int(round(rho_max / rho_step)) + 1
        kwargs["rho_grid"] = tuple(i * rho_step for i in range(count))
    if args.trials is not None:
        kwargs["trials"] = args.trials
    if args.methods:
        kwargs["methods"] = tuple(v.strip() for v in args.methods.split(","))
    if args.workers is not None:
        kwargs["workers"] = args.workers
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if default_trials is not None and "trials" not in kwargs:
        kwargs["trials"] = default_trials
    try:
        config = exp.ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if config.seed is None:
        raise UsageError("--seed is mandatory (reproducibility contract)")
    return config


def _cmd_simulate(args) -> int:
    config = _config_from_args(args)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    result = exp.run_campaign(config)
    results_path = args.out_dir / "results.csv"
    errors_path = args.out_dir / "errors.csv"
    exp.write_results_csv(result, results_path)
    exp.write_errors_csv(result, errors_path)
    print(f"wrote {results_path} ({len(result.cells)} cells) and {errors_path}")
    rate = exp.campaign_failure_rate(result)
    if rate > FAILURE_RATE_THRESHOLD:
        print(
            f"error: solver failure rate {rate:.2%} exceeds {FAILURE_RATE_THRESHOLD:.0%}",
            file=sys.stderr,
        )
        return 2
    return 0


def _cmd_dynamics_scan(args) -> int:
    try:
        params = qdynamics.TwoLevelParams(args.nu_over_hbar, args.gamma, args.omega0)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.points < 1:
        raise UsageError("--points must be >= 1")
    t_max = args.t_max if args.t_max is not None else math.sqrt(1e-4 / args.gamma)
    if t_max <= 0:
        raise UsageError("--t-max must be positive")
    eps = args.filter_eps if args.filter_eps is not None else math.sqrt(params.approx_ratio)
    grid = np.linspace(0.0, t_max, args.points)
    report = qdynamics.phase_discrepancy_scan(params, grid, eps)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    out = args.out_dir / "dynamics.csv"
    qdynamics.write_dynamics_csv(report, out)
    print(f"wrote {out} ({args.points} points)")
    print(f"max unfiltered discrepancy: {report.max_unfiltered_discrepancy:.6e} rad")
    print(f"filtered fraction: {report.filtered_fraction:.6e} (filter eps {eps:.3e})")
    if params.nu_over_hbar <= 100.0:
        # moderate coupling: the fixed-step integrator is feasible, cross-check
        steps = max(2000, int(20 * params.s_factor * (params.gamma * t_max + params.omega0 / 2) * t_max) + 1)
        traj = qdynamics.integrate_two_level(params, t_max, steps)
        dev = 0.0
        for idx in range(0, steps + 1, max(1, steps // 64)):
            pair = qdynamics.closed_form_state(params, traj.t[idx])
            dev = max(dev, abs(pair.c0 - traj.c0[idx]), abs(pair.c1 - traj.c1[idx]))
        print(f"closed form vs fixed-step integrator: max deviation {dev:.3e}")
    return 0


def _cmd_verify_qsim(args) -> int:
    report = run_verification(
        instances=args.instances, seed=args.seed, inject_phase_error=args.inject_phase_error
    )
    for line in report.summary_lines():
        print(line)
    return 0 if report.passed else 2


def _cmd_crlb(args) -> int:
    config = _config_from_args(args, default_trials=1000)
    rhos = [r for r in config.rho_grid if r > 0]
    if not rhos:
        raise UsageError("crlb needs at least one nonzero noise level (rho = 0 is rejected)")
    truths = exp.sample_positions(config, exp.position_stream(config.seed))
    print("m,rho,crlb_rmse_bound")
    for m in config.m_list:
        for rho in rhos:
            traces = []
            for trial in range(config.trials):
                rng = exp.trial_stream(config.seed, exp.METHOD_QUERLOC, trial)
                _, system = exp.run_trial(
                    config, exp.METHOD_QUERLOC, m, rho, truths[trial], rng,
                    trial=trial, with_system=True,
                )
                if system is not None:
                    traces.append(fisher_trace_inverse(system, rho))
            bound = math.sqrt(sum(traces) / len(traces))
            print(f"{m},{format_float(rho)},{format_float(bound)}")
    return 0


def _cmd_bench(args) -> int:
    config = _config_from_args(args)
    rows = exp.bench_timing(config)
    print("method,m,rho,trials,failures,mean_solve_time_s")
    for row in rows:
        mean = format_float(row.mean_solve_time) if row.mean_solve_time is not None else ""
        print(f"{row.method},{row.m},{format_float(row.rho)},{row.trials},{row.failures},{mean}")
    attempted = [r for r in rows if r.mean_solve_time is not None]
    failures = sum(r.failures for r in attempted)
    total = sum(r.trials for r in attempted)
    if total and failures / total > FAILURE_RATE_THRESHOLD:
        print(f"error: solver failure rate {failures / total:.2%}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems; the contract says 1
        return 0 if exc.code in (0, None) else 1
    handlers = {
        "simulate": _cmd_simulate,
        "dynamics-scan": _cmd_dynamics_scan,
        "verify-qsim": _cmd_verify_qsim,
        "crlb": _cmd_crlb,
        "bench": _cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
