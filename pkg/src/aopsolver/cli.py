"""Command-line experiment runner emitting CSV result tables.

Every command is deterministic given (config, seed): outputs carry no
timestamps, and reruns produce byte-identical files.  A manifest recording
the resolved-config hash, seed and tool version is written next to each
command's outputs.

Exit codes: 0 success, 1 usage/config error, 2 solver failure,
3 simulation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import ConfigError, apply_overrides, build_from_dict, config_digest, load_config_dict
from .lagrangian import MixturePolicy, StepRule, refine, robbins_monro
from .model import AopMdp, ModelError, build_model
from .policyio import (
    atomic_write_text,
    write_csv,
    write_lambda_trace_csv,
    write_mixture_summary,
    write_policy_csv,
    write_policy_diff_csv,
    write_ratio_report_csv,
    write_trajectory_summaries,
    SUMMARY_HEADER,
    trajectory_summary_row,
)
from .simulate import Benchmark, Mixture, SimulationError, ratio_report, simulate
from .solver import SolverError, policy_iteration

__all__ = ["main"]

MEDIUM_TX_GRID_MS = (600.0, 700.0, 800.0, 900.0, 1000.0, 1100.0)
CYCLES_GRID_GIGACYCLES = (1.0, 1.2, 1.4, 1.6, 1.8, 2.0)
BENCH_POLICIES = ("optimal", "aezw", "aecw", "alcw")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="aop", description=__doc__)
    parser.add_argument("--version", action="version", version=f"aop {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", metavar="PATH", default=None,
                       help="YAML config file (default: bundled scenario)")
        p.add_argument("--out", metavar="DIR", default="aop_out",
                       help="output directory (default: %(default)s)")
        p.add_argument("--seed", type=int, default=42, metavar="U64",
                       help="simulation seed (default: %(default)s)")
        p.add_argument("--n-updates", type=int, default=100_000, metavar="COUNT",
                       help="updates per simulation (default: %(default)s)")
        p.add_argument("--step-rule", choices=("harmonic", "scaled", "both"),
                       default="scaled", help="multiplier step rule (default: %(default)s)")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="config override, repeatable")
        p.add_argument("--workers", type=int, default=1, metavar="COUNT",
                       help="parallel sweep workers (default: %(default)s)")

    for name, help_text in [
        ("solve", "run the multiplier search and mixture refinement"),
        ("lambda-trace", "emit the multiplier search trace(s) only"),
        ("simulate", "simulate one policy and emit its summary"),
        ("ratio-check", "prefix series of both age estimators for the solved mixture"),
        ("policy-dump", "emit solved policy tables and their difference report"),
        ("bench", "compare the solved mixture against the benchmark policies"),
        ("sweep-tx", "re-solve and simulate over the medium transmission-time grid"),
        ("sweep-cycles", "re-solve and simulate over the computation-demand grid"),
    ]:
        p = sub.add_parser(name, help=help_text)
        common(p)
        if name == "simulate":
            p.add_argument("--policy", choices=BENCH_POLICIES, default="optimal",
                           help="policy to simulate (default: %(default)s)")
    return parser


def _load_model(args) -> tuple[AopMdp, dict]:
    data = apply_overrides(load_config_dict(args.config), args.overrides)
    cfg, chan = build_from_dict(data)
    return build_model(cfg, chan), data


def _write_manifest(out: Path, args, data: dict) -> None:
    payload = {
        "command": args.command,
        "config_sha256": config_digest(data),
        "n_updates": args.n_updates,
        "seed": args.seed,
        "step_rule": args.step_rule,
        "tool_version": __version__,
    }
    atomic_write_text(out / "manifest.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _step_rules(args, model: AopMdp) -> list[tuple[str, StepRule]]:
    scaled = StepRule.scaled(model.cfg.step_factor)
    if args.step_rule == "harmonic":
        return [("harmonic", StepRule.harmonic())]
    if args.step_rule == "both":
        return [("harmonic", StepRule.harmonic()), ("scaled", scaled)]
    return [("scaled", scaled)]


def _solve_mixture(model: AopMdp, rule: StepRule) -> tuple[MixturePolicy, float, object]:
    trace = robbins_monro(model, rule)
    mixture = refine(model, trace.final_lambda)
    return mixture, trace.final_lambda, trace


def _policy_kind(name: str, model: AopMdp, rule: StepRule):
    if name == "optimal":
        mixture, _, _ = _solve_mixture(model, rule)
        return Mixture(mixture)
    return {"aezw": Benchmark.AEZW, "aecw": Benchmark.AECW, "alcw": Benchmark.ALCW}[name]


def _primary_rule(args, model: AopMdp) -> StepRule:
    # the mixture behind bench/sweeps/ratio uses the scaled rule unless the
    # harmonic one was requested alone
    rules = _step_rules(args, model)
    named = dict(rules)
    return named.get("scaled", rules[0][1])


def cmd_solve(args) -> None:
    model, data = _load_model(args)
    rules = _step_rules(args, model)
    out = Path(args.out)
    traces = {}
    for name, rule in rules:
        traces[name] = robbins_monro(model, rule)
        suffix = f"_{name}" if len(rules) > 1 else ""
        write_lambda_trace_csv(out / f"lambda_trace{suffix}.csv", traces[name])
    primary_name = "scaled" if "scaled" in traces else rules[0][0]
    trace = traces[primary_name]
    mixture = refine(model, trace.final_lambda)
    write_policy_csv(out / "policy_high.csv", mixture.high, model)
    write_policy_csv(out / "policy_low.csv", mixture.low, model)
    write_mixture_summary(
        out / "mixture.json",
        mixture,
        trace.final_lambda,
        extra={
            "step_rule": primary_name,
            "iterations": len(trace),
            "converged": trace.converged,
        },
    )
    _write_manifest(out, args, data)


def cmd_lambda_trace(args) -> None:
    model, data = _load_model(args)
    rules = _step_rules(args, model)
    out = Path(args.out)
    for name, rule in rules:
        trace = robbins_monro(model, rule)
        suffix = f"_{name}" if len(rules) > 1 else ""
        write_lambda_trace_csv(out / f"lambda_trace{suffix}.csv", trace)
    _write_manifest(out, args, data)


def cmd_simulate(args) -> None:
    model, data = _load_model(args)
    kind = _policy_kind(args.policy, model, _primary_rule(args, model))
    trajectory = simulate(kind, args.n_updates, args.seed, model)
    write_trajectory_summaries(Path(args.out) / "simulate.csv", [(args.policy, trajectory)])
    _write_manifest(Path(args.out), args, data)


def cmd_ratio_check(args) -> None:
    model, data = _load_model(args)
    mixture, _, _ = _solve_mixture(model, _primary_rule(args, model))
    trajectory = simulate(Mixture(mixture), args.n_updates, args.seed, model)
    write_ratio_report_csv(Path(args.out) / "ratio.csv", ratio_report(trajectory))
    _write_manifest(Path(args.out), args, data)


def cmd_policy_dump(args) -> None:
    model, data = _load_model(args)
    mixture, lambda_star, _ = _solve_mixture(model, _primary_rule(args, model))
    star, _, _ = policy_iteration(lambda_star, model)
    out = Path(args.out)
    write_policy_csv(out / "policy_star.csv", star, model)
    write_policy_csv(out / "policy_high.csv", mixture.high, model)
    write_policy_csv(out / "policy_low.csv", mixture.low, model)
    write_policy_diff_csv(out / "policy_diff.csv", mixture.high, mixture.low, model)
    _write_manifest(out, args, data)


def cmd_bench(args) -> None:
    model, data = _load_model(args)
    rule = _primary_rule(args, model)
    mixture, _, _ = _solve_mixture(model, rule)
    entries = []
    for name in BENCH_POLICIES:
        kind = Mixture(mixture) if name == "optimal" else _policy_kind(name, model, rule)
        entries.append((name, simulate(kind, args.n_updates, args.seed, model)))
    optimal_aop = entries[0][1].avg_aop_ratio_of_sums
    extras = [
        [100.0 * (t.avg_aop_ratio_of_sums - optimal_aop) / t.avg_aop_ratio_of_sums]
        for _, t in entries
    ]
    write_trajectory_summaries(
        Path(args.out) / "bench.csv",
        entries,
        extra_header=["aop_reduction_vs_optimal_pct"],
        extra_values=extras,
    )
    _write_manifest(Path(args.out), args, data)


def _sweep_point(payload) -> list[list]:
    """One sweep point: re-solve and simulate every policy (worker-safe)."""
    data, point_override, point_label, point_value, n_updates, seed = payload
    point_data = apply_overrides(data, [point_override])
    cfg, chan = build_from_dict(point_data)
    model = build_model(cfg, chan)
    mixture, _, _ = _solve_mixture(model, StepRule.scaled(cfg.step_factor))
    rows = []
    for name in BENCH_POLICIES:
        if name == "optimal":
            kind = Mixture(mixture)
        else:
            kind = {"aezw": Benchmark.AEZW, "aecw": Benchmark.AECW, "alcw": Benchmark.ALCW}[name]
        trajectory = simulate(kind, n_updates, seed, model)
        rows.append([point_value] + trajectory_summary_row(name, trajectory))
    return rows


def _run_sweep(args, data: dict, jobs: list, header_first: str, out_name: str) -> None:
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(job) for job in jobs]
    rows = [row for point_rows in results for row in point_rows]
    write_csv(Path(args.out) / out_name, [header_first] + SUMMARY_HEADER, rows)
    _write_manifest(Path(args.out), args, data)


def cmd_sweep_tx(args) -> None:
    data = apply_overrides(load_config_dict(args.config), args.overrides)
    build_from_dict(data)  # validate before spawning workers
    jobs = []
    for medium in MEDIUM_TX_GRID_MS:
        # good state is half the medium one, bad state twice it
        override = (
            f"channel.tx_times_ms=[{medium / 2.0}, {medium}, {2.0 * medium}]"
        )
        jobs.append((data, override, "medium_tx_ms", medium, args.n_updates, args.seed))
    _run_sweep(args, data, jobs, "medium_tx_ms", "sweep_tx.csv")


def cmd_sweep_cycles(args) -> None:
    data = apply_overrides(load_config_dict(args.config), args.overrides)
    build_from_dict(data)
    jobs = []
    for giga in CYCLES_GRID_GIGACYCLES:
        override = f"cycles_megacycles={giga * 1000.0}"
        jobs.append((data, override, "cycles_gigacycles", giga, args.n_updates, args.seed))
    _run_sweep(args, data, jobs, "cycles_gigacycles", "sweep_cycles.csv")


_COMMANDS = {
    "solve": cmd_solve,
    "lambda-trace": cmd_lambda_trace,
    "simulate": cmd_simulate,
    "ratio-check": cmd_ratio_check,
    "policy-dump": cmd_policy_dump,
    "bench": cmd_bench,
    "sweep-tx": cmd_sweep_tx,
    "sweep-cycles": cmd_sweep_cycles,
}


def main(argv: "list[str] | None" = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        Path(args.out).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"aop: cannot create output directory: {exc}", file=sys.stderr)
        return 1
    try:
        _COMMANDS[args.command](args)
    except (ConfigError, ModelError) as exc:
        print(f"aop: config error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"aop: solver failure: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"aop: simulation failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
