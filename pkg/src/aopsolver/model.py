"""Physical timing model, finite state/action space, transitions and rewards.

The decision process tracks, at each delivery instant, the previous update's
processing age and inserted wait, how the current update was processed, and
the wireless channel state.  Because the current age is fully determined by
(processing origin, channel state), states are encoded by that pair rather
than by a raw age value.

All times are kept in milliseconds (double precision).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "ModelError",
    "ProcessingOrigin",
    "SystemConfig",
    "ChannelModel",
    "AopState",
    "Action",
    "StateSpace",
    "local_processing_time",
    "edge_execution_time",
    "path_loss_db",
    "offloading_rate",
    "transmission_time_from_rate",
    "age_after_processing",
    "enumerate_states",
    "enumerate_actions",
    "transition_distribution",
    "raw_area_reward",
    "relaxed_reward",
    "lagrange_reward",
    "AopMdp",
    "build_model",
]

ROW_SUM_TOL = 1e-12
# two age values closer than this would make the state encoding ambiguous
AGE_COLLISION_TOL = 1e-9


class ModelError(ValueError):
    """Invalid configuration or model construction failure."""


class ProcessingOrigin(enum.IntEnum):
    """Where an update is processed.  Edge carries code 0, local code 1."""

    EDGE = 0
    LOCAL = 1

    @property
    def label(self) -> str:
        return "edge" if self is ProcessingOrigin.EDGE else "local"

    @classmethod
    def from_label(cls, label: str) -> "ProcessingOrigin":
        try:
            return {"edge": cls.EDGE, "local": cls.LOCAL}[label.strip().lower()]
        except KeyError:
            raise ModelError(f"unknown processing origin {label!r}") from None


@dataclass(frozen=True)
class SystemConfig:
    """Physical and algorithmic parameters, in canonical units.

    Times are milliseconds, sizes bits, frequencies Hz, powers dBm.
    """

    input_size_bits: float
    cycles: float
    local_freq_hz: float
    edge_freq_hz: float
    bandwidth_hz: float
    distance_km: float
    tx_power_dbm: float
    noise_power_dbm: float
    wait_grid_ms: tuple[float, ...]
    t_min_ms: float
    perturbation: float = 3e-5
    step_factor: float = 1e-3
    stop_tol: float = 1e-4
    max_outer_iters: int = 100_000

    def __post_init__(self) -> None:
        positives = {
            "input_size_bits": self.input_size_bits,
            "cycles": self.cycles,
            "local_freq_hz": self.local_freq_hz,
            "edge_freq_hz": self.edge_freq_hz,
            "bandwidth_hz": self.bandwidth_hz,
            "distance_km": self.distance_km,
            "t_min_ms": self.t_min_ms,
            "step_factor": self.step_factor,
            "stop_tol": self.stop_tol,
        }
        for name, value in positives.items():
            if not (value > 0) or not math.isfinite(value):
                raise ModelError(f"{name} must be strictly positive, got {value!r}")
        grid = tuple(float(z) for z in self.wait_grid_ms)
        if not grid or grid[0] != 0.0:
            raise ModelError("wait_grid_ms must start at 0")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ModelError("wait_grid_ms must be strictly ascending with no duplicates")
        if any(z < 0 for z in grid):
            raise ModelError("wait times must be non-negative")
        object.__setattr__(self, "wait_grid_ms", grid)
        if not (0 < self.perturbation < 0.1):
            raise ModelError(
                f"perturbation must lie in (0, 0.1), got {self.perturbation!r}"
            )
        if self.max_outer_iters < 1:
            raise ModelError("max_outer_iters must be at least 1")


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """Finite Markov channel: per-state transmission times and transition matrix."""

    labels: tuple[str, ...]
    tx_times_ms: tuple[float, ...]
    transition: np.ndarray

    def __post_init__(self) -> None:
        times = tuple(float(t) for t in self.tx_times_ms)
        if not times:
            raise ModelError("channel needs at least one state")
        if times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ModelError(
                "tx_times_ms must be strictly positive and strictly increasing"
            )
        object.__setattr__(self, "tx_times_ms", times)
        labels = tuple(str(s) for s in self.labels)
        if len(labels) != len(times):
            raise ModelError("labels and tx_times_ms must have equal length")
        object.__setattr__(self, "labels", labels)

        matrix = np.asarray(self.transition, dtype=float)
        if matrix.shape != (len(times), len(times)):
            raise ModelError(
                f"transition matrix must be {len(times)}x{len(times)}, got {matrix.shape}"
            )
        if (matrix < 0).any():
            raise ModelError("transition probabilities must be non-negative")
        row_sums = matrix.sum(axis=1)
        if np.abs(row_sums - 1.0).max() > ROW_SUM_TOL:
            raise ModelError(f"transition rows must sum to 1, got sums {row_sums}")
        matrix = matrix.copy()
        matrix.flags.writeable = False
        object.__setattr__(self, "transition", matrix)

    @property
    def n_states(self) -> int:
        return len(self.tx_times_ms)

    @classmethod
    def from_tx_times(
        cls,
        tx_times_ms: "tuple[float, ...] | list[float]",
        transition: "np.ndarray | list[list[float]]",
        labels: "tuple[str, ...] | list[str] | None" = None,
    ) -> "ChannelModel":
        if labels is None:
            labels = tuple(f"c{m}" for m in range(len(tx_times_ms)))
        return cls(tuple(labels), tuple(tx_times_ms), np.asarray(transition, float))


class AopState(NamedTuple):
    """System state at a delivery instant.

    The current age is derived, never stored: edge states age as execution
    plus the transmission time of ``channel_index``; local states always age
    as the local processing time.
    """

    prev_age_index: int
    prev_wait_index: int
    cur_origin: ProcessingOrigin
    channel_index: int


class Action(NamedTuple):
    """Inserted wait (grid index) and processing origin for the next update."""

    wait_index: int
    next_origin: ProcessingOrigin


def local_processing_time(cfg: SystemConfig) -> float:
    """Local processing time in ms: CPU cycles over local frequency."""
    return cfg.cycles / cfg.local_freq_hz * 1e3


def edge_execution_time(cfg: SystemConfig) -> float:
    """Edge execution time in ms: CPU cycles over edge frequency."""
    return cfg.cycles / cfg.edge_freq_hz * 1e3


def path_loss_db(distance_km: float) -> float:
    """Distance-dependent path loss, 140.7 + 36.7*log10(d km), in dB."""
    if not (distance_km > 0):
        raise ModelError(f"distance must be positive, got {distance_km!r}")
    return 140.7 + 36.7 * math.log10(distance_km)


def offloading_rate(cfg: SystemConfig) -> float:
    """Uplink rate in bit/s for the configured link budget.

    Powers are converted from dBm to linear milliwatts; the path-loss figure
    is treated as attenuation, so the linear gain is 10**(-L/10).
    """
    loss_db = path_loss_db(cfg.distance_km)
    gain = 10.0 ** (-loss_db / 10.0)
    p_mw = 10.0 ** (cfg.tx_power_dbm / 10.0)
    noise_mw = 10.0 ** (cfg.noise_power_dbm / 10.0)
    snr = p_mw * gain / noise_mw
    return cfg.bandwidth_hz * math.log2(1.0 + snr)


def transmission_time_from_rate(cfg: SystemConfig) -> float:
    """Transmission time in ms implied by the link-budget rate.

    Helper for building channel configurations; the solver itself consumes
    the per-channel-state transmission times.
    """
    rate = offloading_rate(cfg)
    if rate <= 0:
        raise ModelError("offloading rate is zero; cannot derive a transmission time")
    return cfg.input_size_bits / rate * 1e3


def age_after_processing(
    origin: ProcessingOrigin,
    channel_index: int,
    cfg: SystemConfig,
    chan: ChannelModel,
) -> float:
    """Processing age of an update in ms given where it ran and the channel."""
    if origin is ProcessingOrigin.LOCAL:
        return local_processing_time(cfg)
    if not 0 <= channel_index < chan.n_states:
        raise ModelError(f"channel index {channel_index} out of range")
    return edge_execution_time(cfg) + chan.tx_times_ms[channel_index]


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Dense enumeration of every (prev age, prev wait, origin, channel) state.

    ``y_values_ms[0]`` is the local age; ``y_values_ms[1 + m]`` the edge age
    under channel m, so the index of a current age is recoverable from the
    (origin, channel) pair alone.
    """

    states: tuple[AopState, ...]
    index_of: dict[AopState, int] = field(repr=False)
    y_values_ms: tuple[float, ...]
    wait_grid_ms: tuple[float, ...]
    n_channels: int

    @property
    def n_states(self) -> int:
        return len(self.states)

    def y_index(self, origin: ProcessingOrigin, channel_index: int) -> int:
        return 0 if origin is ProcessingOrigin.LOCAL else 1 + channel_index

    def current_age_ms(self, state: AopState) -> float:
        return self.y_values_ms[self.y_index(state.cur_origin, state.channel_index)]

    def index(self, state: AopState) -> int:
        try:
            return self.index_of[state]
        except KeyError:
            raise ModelError(f"state {state} is not part of this space") from None


def enumerate_states(cfg: SystemConfig, chan: ChannelModel) -> StateSpace:
    """Enumerate the full state space in lexicographic order.

    Rejects configurations where the local age collides with an edge age,
    which would merge distinct states in the previous-age value set.
    """
    t_l = local_processing_time(cfg)
    t_ex = edge_execution_time(cfg)
    y_values = (t_l,) + tuple(t_ex + t for t in chan.tx_times_ms)
    for i, a in enumerate(y_values):
        for b in y_values[i + 1 :]:
            if abs(a - b) <= AGE_COLLISION_TOL * max(1.0, abs(a)):
                raise ModelError(
                    f"age collision: local and edge processing ages overlap at {a} ms; "
                    "adjust frequencies or transmission times"
                )

    states = tuple(
        AopState(pa, pw, origin, x)
        for pa in range(len(y_values))
        for pw in range(len(cfg.wait_grid_ms))
        for origin in (ProcessingOrigin.EDGE, ProcessingOrigin.LOCAL)
        for x in range(chan.n_states)
    )
    index_of = {s: i for i, s in enumerate(states)}
    return StateSpace(
        states=states,
        index_of=index_of,
        y_values_ms=y_values,
        wait_grid_ms=cfg.wait_grid_ms,
        n_channels=chan.n_states,
    )


def enumerate_actions(cfg: SystemConfig) -> tuple[Action, ...]:
    """All actions in lexicographic (wait_index, origin code) order."""
    return tuple(
        Action(w, origin)
        for w in range(len(cfg.wait_grid_ms))
        for origin in (ProcessingOrigin.EDGE, ProcessingOrigin.LOCAL)
    )


def transition_distribution(
    state: AopState,
    action: Action,
    cfg: SystemConfig,
    chan: ChannelModel,
    space: StateSpace,
) -> list[tuple[AopState, float]]:
    """Successor distribution of (state, action).

    The next previous-age is the current age, the next wait is the chosen
    wait, the next origin is the chosen origin, and the channel advances one
    step of its chain.  Zero-probability successors are omitted.
    """
    next_prev_age = space.y_index(state.cur_origin, state.channel_index)
    row = chan.transition[state.channel_index]
    out: list[tuple[AopState, float]] = []
    for x_next, prob in enumerate(row):
        if prob <= 0.0:
            continue
        succ = AopState(next_prev_age, action.wait_index, action.next_origin, x_next)
        out.append((succ, float(prob)))
    return out


def _state_values(
    state: AopState, action: Action, cfg: SystemConfig, chan: ChannelModel
) -> tuple[float, float, float, float]:
    t_l = local_processing_time(cfg)
    t_ex = edge_execution_time(cfg)
    y_values = (t_l,) + tuple(t_ex + t for t in chan.tx_times_ms)
    y_prev = y_values[state.prev_age_index]
    z_prev = cfg.wait_grid_ms[state.prev_wait_index]
    if state.cur_origin is ProcessingOrigin.LOCAL:
        y_cur = t_l
    else:
        y_cur = t_ex + chan.tx_times_ms[state.channel_index]
    z_cur = cfg.wait_grid_ms[action.wait_index]
    return y_prev, z_prev, y_cur, z_cur


def raw_area_reward(
    state: AopState, action: Action, cfg: SystemConfig, chan: ChannelModel
) -> float:
    """Age area of one update cycle in ms^2: parallelogram plus triangle."""
    y_prev, z_prev, y_cur, z_cur = _state_values(state, action, cfg, chan)
    return (y_prev + z_prev) * y_cur + 0.5 * (y_cur + z_cur) ** 2


def relaxed_reward(
    state: AopState, action: Action, cfg: SystemConfig, chan: ChannelModel
) -> float:
    """Per-cycle time-averaged age area in ms (the relaxed objective)."""
    y_prev, z_prev, y_cur, z_cur = _state_values(state, action, cfg, chan)
    return (y_prev + z_prev) / (y_cur + z_cur) * y_cur + 0.5 * (y_cur + z_cur)


def lagrange_reward(
    state: AopState,
    action: Action,
    lam: float,
    cfg: SystemConfig,
    chan: ChannelModel,
) -> float:
    """Relaxed reward minus ``lam`` times the cycle length (ms)."""
    if lam < 0:
        raise ModelError(f"multiplier must be non-negative, got {lam!r}")
    y_prev, z_prev, y_cur, z_cur = _state_values(state, action, cfg, chan)
    cycle = y_cur + z_cur
    return (y_prev + z_prev) / cycle * y_cur + 0.5 * cycle - lam * cycle


@dataclass(frozen=True, eq=False)
class AopMdp:
    """Bundled model: config, channel, state space and dense caches.

    The dense arrays are built by evaluating the per-state functions above,
    so both access paths agree bit-exactly.  ``transitions[a]`` is the
    successor matrix under action ``a``; rewards and cycle lengths are
    (n_states, n_actions) tables.
    """

    cfg: SystemConfig
    chan: ChannelModel
    space: StateSpace
    actions: tuple[Action, ...]
    transitions: np.ndarray  # (A, N, N)
    relaxed: np.ndarray  # (N, A), ms
    cycle: np.ndarray  # (N, A), ms

    @property
    def n_states(self) -> int:
        return self.space.n_states

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def lagrange_rewards(self, lam: float) -> np.ndarray:
        """Dense (n_states, n_actions) reward table at multiplier ``lam``."""
        if lam < 0:
            raise ModelError(f"multiplier must be non-negative, got {lam!r}")
        return self.relaxed - lam * self.cycle

    def state_index(
        self,
        prev_age_index: int,
        prev_wait_index: int,
        origin: ProcessingOrigin,
        channel_index: int,
    ) -> int:
        n_wait = len(self.cfg.wait_grid_ms)
        n_chan = self.chan.n_states
        return (
            (prev_age_index * n_wait + prev_wait_index) * 2 + int(origin)
        ) * n_chan + channel_index


def build_model(cfg: SystemConfig, chan: ChannelModel) -> AopMdp:
    """Construct the dense MDP tables from the pure per-state functions."""
    space = enumerate_states(cfg, chan)
    actions = enumerate_actions(cfg)
    n, a = space.n_states, len(actions)

    transitions = np.zeros((a, n, n))
    relaxed = np.zeros((n, a))
    cycle = np.zeros((n, a))
    for si, state in enumerate(space.states):
        y_cur = space.current_age_ms(state)
        for ai, action in enumerate(actions):
            relaxed[si, ai] = relaxed_reward(state, action, cfg, chan)
            cycle[si, ai] = y_cur + cfg.wait_grid_ms[action.wait_index]
            for succ, prob in transition_distribution(state, action, cfg, chan, space):
                transitions[ai, si, space.index_of[succ]] = prob
    for arr in (transitions, relaxed, cycle):
        arr.flags.writeable = False

    mdp = AopMdp(
        cfg=cfg,
        chan=chan,
        space=space,
        actions=actions,
        transitions=transitions,
        relaxed=relaxed,
        cycle=cycle,
    )
    # sanity: dense index arithmetic must match the enumeration order
    first = space.states[0]
    if mdp.state_index(*first) != 0:
        raise ModelError("state enumeration order mismatch")
    return mdp
