"""Text serialization of policies, traces and trajectory summaries.

All writers are deterministic: same inputs, same bytes.  Files are written
atomically (temp file + rename).
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Iterable

from .lagrangian import LambdaTrace, MixturePolicy
from .model import Action, AopMdp, ProcessingOrigin
from .simulate import Trajectory
from .solver import SolverError, StationaryDeterministicPolicy

__all__ = [
    "atomic_write_text",
    "write_csv",
    "policy_rows",
    "write_policy_csv",
    "read_policy_csv",
    "write_policy_diff_csv",
    "write_lambda_trace_csv",
    "trajectory_summary_row",
    "write_trajectory_summaries",
    "write_ratio_report_csv",
    "write_mixture_summary",
]

POLICY_HEADER = [
    "state",
    "prev_age_ms",
    "prev_wait_ms",
    "cur_origin",
    "channel",
    "cur_age_ms",
    "wait_ms",
    "origin",
]
TRACE_HEADER = ["iteration", "lambda", "avg_cycle_ms"]
SUMMARY_HEADER = [
    "policy",
    "n",
    "seed",
    "avg_aop_ratio_of_sums_ms",
    "avg_aop_mean_of_ratios_ms",
    "avg_cycle_ms",
]
RATIO_HEADER = ["n_prefix", "q_bar_ms", "q_tilde_ms", "ratio"]


def atomic_write_text(path: "str | Path", text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_csv(path: "str | Path", header: list[str], rows: Iterable[Iterable]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def policy_rows(policy: StationaryDeterministicPolicy, model: AopMdp) -> list[list]:
    space, cfg, chan = model.space, model.cfg, model.chan
    rows = []
    for i, state in enumerate(space.states):
        action = policy.action(i)
        rows.append(
            [
                i,
                space.y_values_ms[state.prev_age_index],
                cfg.wait_grid_ms[state.prev_wait_index],
                state.cur_origin.label,
                chan.labels[state.channel_index],
                space.current_age_ms(state),
                cfg.wait_grid_ms[action.wait_index],
                action.next_origin.label,
            ]
        )
    return rows


def write_policy_csv(
    path: "str | Path", policy: StationaryDeterministicPolicy, model: AopMdp
) -> None:
    write_csv(path, POLICY_HEADER, policy_rows(policy, model))


def read_policy_csv(path: "str | Path", model: AopMdp) -> StationaryDeterministicPolicy:
    """Load a policy table and validate it against ``model``."""
    wait_index = {z: i for i, z in enumerate(model.cfg.wait_grid_ms)}
    actions: dict[int, Action] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(POLICY_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise SolverError(f"policy file {path} lacks columns {sorted(missing)}")
        for row in reader:
            idx = int(row["state"])
            wait = float(row["wait_ms"])
            if wait not in wait_index:
                raise SolverError(f"policy file wait {wait} ms is not on the grid")
            actions[idx] = Action(
                wait_index[wait], ProcessingOrigin.from_label(row["origin"])
            )
    if sorted(actions) != list(range(model.n_states)):
        raise SolverError(
            f"policy file {path} does not cover the {model.n_states} model states"
        )
    return StationaryDeterministicPolicy(tuple(actions[i] for i in range(model.n_states)))


def write_policy_diff_csv(
    path: "str | Path",
    high: StationaryDeterministicPolicy,
    low: StationaryDeterministicPolicy,
    model: AopMdp,
) -> list[int]:
    """Write the states where two policies differ; returns their indices."""
    space, cfg, chan = model.space, model.cfg, model.chan
    diff = [i for i in range(model.n_states) if high.action(i) != low.action(i)]
    rows = []
    for i in diff:
        state = space.states[i]
        a_high, a_low = high.action(i), low.action(i)
        rows.append(
            [
                i,
                space.y_values_ms[state.prev_age_index],
                cfg.wait_grid_ms[state.prev_wait_index],
                state.cur_origin.label,
                chan.labels[state.channel_index],
                space.current_age_ms(state),
                cfg.wait_grid_ms[a_high.wait_index],
                a_high.next_origin.label,
                cfg.wait_grid_ms[a_low.wait_index],
                a_low.next_origin.label,
            ]
        )
    header = POLICY_HEADER[:6] + ["high_wait_ms", "high_origin", "low_wait_ms", "low_origin"]
    write_csv(path, header, rows)
    return diff


def write_lambda_trace_csv(path: "str | Path", trace: LambdaTrace) -> None:
    write_csv(
        path,
        TRACE_HEADER,
        ([p.iteration, p.lam, p.avg_cycle] for p in trace.iterates),
    )


def trajectory_summary_row(name: str, trajectory: Trajectory) -> list:
    return [
        name,
        trajectory.n,
        trajectory.seed,
        trajectory.avg_aop_ratio_of_sums,
        trajectory.avg_aop_mean_of_ratios,
        trajectory.avg_cycle,
    ]


def write_trajectory_summaries(
    path: "str | Path",
    entries: list[tuple[str, Trajectory]],
    extra_header: "list[str] | None" = None,
    extra_values: "list[list] | None" = None,
) -> None:
    header = SUMMARY_HEADER + (extra_header or [])
    rows = []
    for i, (name, trajectory) in enumerate(entries):
        row = trajectory_summary_row(name, trajectory)
        if extra_values is not None:
            row = row + extra_values[i]
        rows.append(row)
    write_csv(path, header, rows)


def write_ratio_report_csv(
    path: "str | Path", report: list[tuple[int, float, float, float]]
) -> None:
    write_csv(path, RATIO_HEADER, report)


def write_mixture_summary(
    path: "str | Path", mixture: MixturePolicy, lambda_star: float, extra: "dict | None" = None
) -> None:
    payload = {
        "lambda_star": lambda_star,
        "lambda_high": mixture.lam_high,
        "lambda_low": mixture.lam_low,
        "q": mixture.q,
        "degenerate": mixture.degenerate,
        "low_clamped": mixture.low_clamped,
        "avg_cycle_high_ms": mixture.avg_cycle_high,
        "avg_cycle_low_ms": mixture.avg_cycle_low,
        "t_min_ms": mixture.t_min_ms,
        "diff_states": list(mixture.diff_states),
    }
    if extra:
        payload.update(extra)
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
