"""Seeded trajectory simulation of solved, mixed and benchmark policies.

A trajectory starts from a fixed state (best channel, first update processed
locally, zero prior wait).  That bootstrap epoch seeds the recursion and is
not recorded: recorded averages of a deterministic-cycle policy then equal
their closed forms exactly instead of carrying an O(1/n) initialization
term.

Randomness comes from a PCG64 generator seeded per run; the channel uniform
draws are generated first, then (for mixtures) the per-epoch coin draws, so
all policy kinds see the same channel path under the same seed.
"""

from __future__ import annotations

import enum
import warnings
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .lagrangian import MixturePolicy
from .model import AopMdp, ProcessingOrigin, SystemConfig
from .solver import StationaryDeterministicPolicy

__all__ = [
    "SimulationError",
    "Benchmark",
    "Solved",
    "Mixture",
    "PolicyKind",
    "Trajectory",
    "simulate",
    "benchmark_decision",
    "ratio_report",
]


class SimulationError(RuntimeError):
    """Simulation could not run against the given model/policy pair."""


class Benchmark(enum.Enum):
    """Fixed reference policies.

    AEZW always offloads with zero wait; AECW always offloads and pads the
    cycle up to the sampling bound; ALCW always computes locally with the
    same conservative padding.
    """

    AEZW = "aezw"
    AECW = "aecw"
    ALCW = "alcw"


@dataclass(frozen=True)
class Solved:
    policy: StationaryDeterministicPolicy


@dataclass(frozen=True)
class Mixture:
    mixture: MixturePolicy


PolicyKind = "Solved | Mixture | Benchmark"


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Per-update records plus the summary averages they reproduce."""

    n: int
    seed: int
    y_ms: np.ndarray
    z_ms: np.ndarray
    channel: np.ndarray
    q_area_ms2: np.ndarray
    q_step_ms: np.ndarray
    avg_aop_ratio_of_sums: float
    avg_aop_mean_of_ratios: float
    avg_cycle: float


def benchmark_decision(
    kind: Benchmark, current_age_ms: float, cfg: SystemConfig
) -> tuple[float, ProcessingOrigin]:
    """Wait (ms) and next origin under a benchmark policy.

    Benchmark waits follow the defining formulas exactly and are not
    snapped to the solver's wait grid.
    """
    if current_age_ms <= 0:
        raise SimulationError(f"current age must be positive, got {current_age_ms}")
    if kind is Benchmark.AEZW:
        return 0.0, ProcessingOrigin.EDGE
    if kind is Benchmark.AECW:
        return max(cfg.t_min_ms - current_age_ms, 0.0), ProcessingOrigin.EDGE
    t_l = cfg.cycles / cfg.local_freq_hz * 1e3
    wait = cfg.t_min_ms - t_l
    if wait < 0:
        warnings.warn(
            "local processing exceeds the sampling bound; ALCW wait clamped to 0",
            stacklevel=2,
        )
        wait = 0.0
    return wait, ProcessingOrigin.LOCAL


def _check_policy(policy: StationaryDeterministicPolicy, model: AopMdp) -> None:
    if len(policy.actions) != model.n_states:
        raise SimulationError(
            f"policy covers {len(policy.actions)} states but the model has "
            f"{model.n_states}; model/policy mismatch"
        )
    n_wait = len(model.cfg.wait_grid_ms)
    for action in set(policy.actions):
        if not 0 <= action.wait_index < n_wait:
            raise SimulationError(f"policy action {action} is outside the wait grid")


def simulate(kind: "Solved | Mixture | Benchmark", n: int, seed: int, model: AopMdp) -> Trajectory:
    """Simulate ``n`` recorded status updates under ``kind``.

    Deterministic for a fixed (kind, n, seed, model).
    """
    if n < 1:
        raise SimulationError(f"need at least one update, got n={n}")
    if seed < 0:
        raise SimulationError(f"seed must be non-negative, got {seed}")

    cfg, chan, space = model.cfg, model.chan, model.space
    if isinstance(kind, Solved):
        _check_policy(kind.policy, model)
    elif isinstance(kind, Mixture):
        _check_policy(kind.mixture.high, model)
        _check_policy(kind.mixture.low, model)
    elif not isinstance(kind, Benchmark):
        raise SimulationError(f"unknown policy kind {kind!r}")

    rng = np.random.Generator(np.random.PCG64(seed))
    channel_draws = rng.random(n + 1)
    coin_draws = rng.random(n + 1) if isinstance(kind, Mixture) else None

    cum_rows = tuple(tuple(np.cumsum(row)) for row in chan.transition)
    n_chan = chan.n_states
    wait_grid = cfg.wait_grid_ms
    y_values = space.y_values_ms
    t_min = cfg.t_min_ms
    t_l = y_values[0]

    y_out = np.empty(n)
    z_out = np.empty(n)
    x_out = np.empty(n, dtype=np.int64)
    prev_sum_out = np.empty(n)

    # bootstrap state: prior (local age, zero wait), first update local, best channel
    pa_idx, pw_idx = 0, 0
    prev_age, prev_wait = t_l, 0.0
    origin = ProcessingOrigin.LOCAL
    x = 0

    if isinstance(kind, Solved):
        plan = kind.policy.actions
    for i in range(n + 1):
        y_idx = 0 if origin is ProcessingOrigin.LOCAL else 1 + x
        y = y_values[y_idx]

        if isinstance(kind, Benchmark):
            z, next_origin = benchmark_decision(kind, y, cfg)
        else:
            state_idx = ((pa_idx * len(wait_grid) + pw_idx) * 2 + int(origin)) * n_chan + x
            if isinstance(kind, Solved):
                action = plan[state_idx]
            else:
                m = kind.mixture
                action = (
                    m.high.actions[state_idx]
                    if coin_draws[i] < m.q
                    else m.low.actions[state_idx]
                )
            z, next_origin = wait_grid[action.wait_index], action.next_origin
            pw_idx = action.wait_index

        if i > 0:
            j = i - 1
            y_out[j] = y
            z_out[j] = z
            x_out[j] = x
            prev_sum_out[j] = prev_age + prev_wait

        u = channel_draws[i]
        x_next = bisect_right(cum_rows[x], u)
        if x_next >= n_chan:  # cumulative row may fall a ULP short of 1.0
            x_next = n_chan - 1

        pa_idx = y_idx
        prev_age, prev_wait = y, z
        origin = next_origin
        x = x_next

    cycles = y_out + z_out
    q_step = prev_sum_out / cycles * y_out + 0.5 * cycles
    # derived as the product so the per-update area/step identity is exact
    q_area = q_step * cycles
    total_cycle = float(cycles.sum())
    return Trajectory(
        n=n,
        seed=seed,
        y_ms=y_out,
        z_ms=z_out,
        channel=x_out,
        q_area_ms2=q_area,
        q_step_ms=q_step,
        avg_aop_ratio_of_sums=float(q_area.sum()) / total_cycle,
        avg_aop_mean_of_ratios=float(q_step.mean()),
        avg_cycle=total_cycle / n,
    )


def ratio_report(
    trajectory: Trajectory, points: int = 50
) -> list[tuple[int, float, float, float]]:
    """Running prefix averages of both age estimators on a log grid.

    Rows are (prefix length, ratio-of-sums, mean-of-ratios, their ratio);
    the final prefix is always the full trajectory.
    """
    n = trajectory.n
    if n < 1:
        raise SimulationError("trajectory is empty")
    grid = np.unique(
        np.rint(np.geomspace(1, n, num=min(points, n))).astype(np.int64)
    )
    cum_area = np.cumsum(trajectory.q_area_ms2)
    cum_cycle = np.cumsum(trajectory.y_ms + trajectory.z_ms)
    cum_step = np.cumsum(trajectory.q_step_ms)
    out = []
    for n_prefix in grid:
        i = int(n_prefix) - 1
        q_bar = float(cum_area[i] / cum_cycle[i])
        q_tilde = float(cum_step[i] / n_prefix)
        out.append((int(n_prefix), q_bar, q_tilde, q_bar / q_tilde))
    return out
