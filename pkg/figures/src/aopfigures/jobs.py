"""Figure jobs: validated CSV input, one rendered raster image per job.

Every figure id declares the columns it needs; missing columns or empty
tables raise, and no output file is written in that case.  Rendering is a
pure function of the CSV content.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["SchemaError", "FigureJob", "FIGURE_IDS", "render"]


class SchemaError(ValueError):
    """Input rows do not match the figure's expected schema."""


SUMMARY_COLUMNS = (
    "policy",
    "avg_aop_ratio_of_sums_ms",
    "avg_aop_mean_of_ratios_ms",
    "avg_cycle_ms",
)

REQUIRED_COLUMNS = {
    "lambda_trace": ("iteration", "lambda", "avg_cycle_ms"),
    "ratio": ("n_prefix", "q_bar_ms", "q_tilde_ms", "ratio"),
    "bench_bar": SUMMARY_COLUMNS,
    "sweep_tx": ("medium_tx_ms",) + SUMMARY_COLUMNS,
    "sweep_cycles": ("cycles_gigacycles",) + SUMMARY_COLUMNS,
    "policy_3d": (
        "state",
        "prev_age_ms",
        "prev_wait_ms",
        "cur_origin",
        "channel",
        "cur_age_ms",
        "wait_ms",
        "origin",
    ),
}

FIGURE_IDS = tuple(REQUIRED_COLUMNS)

MULTI_INPUT = {"lambda_trace"}


@dataclass(frozen=True)
class FigureJob:
    figure_id: str
    inputs: tuple[Path, ...]
    output: Path

    def __post_init__(self) -> None:
        if self.figure_id not in REQUIRED_COLUMNS:
            raise SchemaError(
                f"unknown figure id {self.figure_id!r}; expected one of {FIGURE_IDS}"
            )
        if not self.inputs:
            raise SchemaError("at least one input CSV is required")
        if len(self.inputs) > 1 and self.figure_id not in MULTI_INPUT:
            raise SchemaError(f"figure {self.figure_id!r} takes exactly one input CSV")


def _load_rows(path: Path, required: tuple[str, ...]) -> list[dict]:
    if not path.exists():
        raise SchemaError(f"input file {path} does not exist")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or ()
        missing = [c for c in required if c not in fields]
        if missing:
            raise SchemaError(f"{path} lacks required columns {missing}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path} contains a header but no data rows")
    return rows


def _floats(rows: list[dict], column: str) -> list[float]:
    try:
        return [float(r[column]) for r in rows]
    except ValueError as exc:
        raise SchemaError(f"column {column} holds a non-numeric value: {exc}") from exc


def _per_policy(rows: list[dict]) -> dict[str, list[dict]]:
    grouped: dict[str, list[dict]] = {}
    for row in rows:
        grouped.setdefault(row["policy"], []).append(row)
    return grouped


def _render_lambda_trace(job: FigureJob, ax) -> None:
    for path in job.inputs:
        rows = _load_rows(path, REQUIRED_COLUMNS["lambda_trace"])
        ax.plot(_floats(rows, "iteration"), _floats(rows, "lambda"), label=path.stem)
    ax.set_xscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("multiplier")
    ax.legend()


def _render_ratio(job: FigureJob, ax) -> None:
    rows = _load_rows(job.inputs[0], REQUIRED_COLUMNS["ratio"])
    n = _floats(rows, "n_prefix")
    ax.plot(n, _floats(rows, "q_bar_ms"), label="ratio of sums")
    ax.plot(n, _floats(rows, "q_tilde_ms"), label="mean of ratios")
    ax.set_xscale("log")
    ax.set_xlabel("status updates")
    ax.set_ylabel("average age of processing (ms)")
    ax.legend(loc="upper left")
    twin = ax.twinx()
    twin.plot(n, _floats(rows, "ratio"), color="tab:red", linestyle="--", label="ratio")
    twin.set_ylabel("estimator ratio")
    twin.legend(loc="lower right")


def _render_bench_bar(job: FigureJob, ax) -> None:
    rows = _load_rows(job.inputs[0], REQUIRED_COLUMNS["bench_bar"])
    policies = [r["policy"] for r in rows]
    x = range(len(policies))
    width = 0.4
    ax.bar([i - width / 2 for i in x], _floats(rows, "avg_aop_ratio_of_sums_ms"),
           width, label="ratio of sums")
    ax.bar([i + width / 2 for i in x], _floats(rows, "avg_aop_mean_of_ratios_ms"),
           width, label="mean of ratios")
    ax.set_xticks(list(x), policies)
    ax.set_ylabel("average age of processing (ms)")
    ax.legend()


def _render_sweep(job: FigureJob, axes, x_column: str, x_label: str) -> None:
    rows = _load_rows(job.inputs[0], REQUIRED_COLUMNS[job.figure_id])
    aop_ax, cycle_ax = axes
    for policy, group in _per_policy(rows).items():
        xs = _floats(group, x_column)
        aop_ax.plot(xs, _floats(group, "avg_aop_ratio_of_sums_ms"), marker="o",
                    label=policy)
        cycle_ax.plot(xs, _floats(group, "avg_cycle_ms"), marker="o", label=policy)
    aop_ax.set_ylabel("average age of processing (ms)")
    cycle_ax.set_ylabel("average sampling duration (ms)")
    for ax in axes:
        ax.set_xlabel(x_label)
        ax.legend()


def _render_policy_panels(job: FigureJob, fig) -> None:
    rows = _load_rows(job.inputs[0], REQUIRED_COLUMNS["policy_3d"])
    panels: dict[tuple[str, str], list[dict]] = {}
    for row in rows:
        panels.setdefault((row["cur_age_ms"], row["channel"]), []).append(row)
    keys = sorted(panels, key=lambda k: (float(k[0]), k[1]))
    n_panels = len(keys)
    n_cols = min(3, n_panels)
    n_rows = -(-n_panels // n_cols)
    origin_color = {"edge": "tab:blue", "local": "tab:orange"}
    for index, key in enumerate(keys, start=1):
        ax = fig.add_subplot(n_rows, n_cols, index)
        group = panels[key]
        history = [float(r["prev_age_ms"]) + float(r["prev_wait_ms"]) for r in group]
        waits = _floats(group, "wait_ms")
        colors = [origin_color.get(r["origin"], "tab:gray") for r in group]
        order = sorted(range(len(group)), key=lambda i: history[i])
        ax.step([history[i] for i in order], [waits[i] for i in order], where="post",
                color="0.7", zorder=1)
        ax.scatter(history, waits, c=colors, s=18, zorder=2)
        ax.set_title(f"age {key[0]} ms, channel {key[1]}", fontsize=8)
        ax.set_xlabel("previous age + wait (ms)", fontsize=7)
        ax.set_ylabel("chosen wait (ms)", fontsize=7)
        ax.tick_params(labelsize=6)
    fig.suptitle("chosen wait vs history (blue: offload next, orange: local next)")


def render(job: FigureJob) -> Path:
    """Render one figure job; returns the output path.

    Raises :class:`SchemaError` before creating the file if any input is
    missing, empty, or lacks required columns.
    """
    if job.figure_id == "policy_3d":
        fig = plt.figure(figsize=(10, 7), layout="constrained")
        try:
            _render_policy_panels(job, fig)
            fig.savefig(job.output, dpi=120)
        finally:
            plt.close(fig)
        return job.output

    if job.figure_id in ("sweep_tx", "sweep_cycles"):
        fig, axes = plt.subplots(1, 2, figsize=(11, 4.5), layout="constrained")
        x_column = "medium_tx_ms" if job.figure_id == "sweep_tx" else "cycles_gigacycles"
        x_label = (
            "medium-state transmission time (ms)"
            if job.figure_id == "sweep_tx"
            else "computation demand (Gigacycles)"
        )
        try:
            _render_sweep(job, axes, x_column, x_label)
            fig.savefig(job.output, dpi=120)
        finally:
            plt.close(fig)
        return job.output

    fig, ax = plt.subplots(figsize=(7, 4.5), layout="constrained")
    try:
        if job.figure_id == "lambda_trace":
            _render_lambda_trace(job, ax)
        elif job.figure_id == "ratio":
            _render_ratio(job, ax)
        else:
            _render_bench_bar(job, ax)
        fig.savefig(job.output, dpi=120)
    finally:
        plt.close(fig)
    return job.output
