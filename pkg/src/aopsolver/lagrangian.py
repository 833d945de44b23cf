"""Lagrange multiplier search and perturbation-based mixture refinement.

The multiplier is driven to the constraint boundary with a Robbins-Monro
recursion whose innermost quantity, the average cycle length of the
multiplier-optimal policy, is computed analytically.  The search is
therefore a deterministic fixed-point iteration.

Because the per-step reward is affine in the multiplier, each solved policy
stays optimal on a whole multiplier interval.  That interval is computed in
closed form from a two-column policy evaluation, letting the search skip
the inner solve while the multiplier stays inside it; results are identical
to re-solving every step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import Action, AopMdp
from .solver import (
    MAX_POLICY_ITERATIONS,
    SolverError,
    StationaryDeterministicPolicy,
    TIE_TOL,
    _solve_gain_bias,
    policy_iteration,
    policy_metrics,
    policy_transition_matrix,
)

__all__ = [
    "StepRule",
    "LambdaTrace",
    "MixturePolicy",
    "robbins_monro",
    "perturbed_multipliers",
    "randomization_factor",
    "refine",
    "mixture_action",
    "lambda_grid_metrics",
]

MIXTURE_IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class StepRule:
    """Diminishing step-size schedule: 1/k, optionally scaled by a factor."""

    kind: str
    factor: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("harmonic", "scaled"):
            raise ValueError(f"unknown step rule {self.kind!r}")
        if self.factor <= 0:
            raise ValueError("step factor must be positive")

    @classmethod
    def harmonic(cls) -> "StepRule":
        return cls("harmonic", 1.0)

    @classmethod
    def scaled(cls, factor: float) -> "StepRule":
        return cls("scaled", factor)

    def step(self, k: int) -> float:
        return self.factor / k if self.kind == "scaled" else 1.0 / k


class TracePoint(NamedTuple):
    iteration: int
    lam: float
    avg_cycle: float


@dataclass(frozen=True)
class LambdaTrace:
    """Multiplier iterates with the cycle average seen at each of them.

    ``final_lambda`` is the multiplier the search settled on.  When the
    iterates bracketed the constraint crossing it is sharpened to the exact
    policy-change breakpoint (the infimum of multipliers whose optimal
    policy meets the sampling bound); the recorded iterates are the raw
    recursion either way.
    """

    iterates: tuple[TracePoint, ...]
    converged: bool
    final_lambda: float

    def __len__(self) -> int:
        return len(self.iterates)


class PerturbedMultipliers(NamedTuple):
    high: float
    low: float
    clamped: bool


class RandomizationFactor(NamedTuple):
    q: float
    degenerate: bool


@dataclass(frozen=True)
class MixturePolicy:
    """Randomized blend of two deterministic policies.

    With probability ``q`` the high-multiplier policy acts, else the low
    one.  For a non-degenerate blend the factor is chosen so the convex
    combination of the two analytic cycle averages hits the sampling bound
    exactly.
    """

    high: StationaryDeterministicPolicy
    low: StationaryDeterministicPolicy
    q: float
    lam_high: float
    lam_low: float
    avg_cycle_high: float
    avg_cycle_low: float
    t_min_ms: float
    degenerate: bool = False
    low_clamped: bool = False
    diff_states: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.q <= 1.0:
            raise SolverError(f"randomization factor must lie in [0,1], got {self.q}")
        if not self.degenerate:
            blend = self.q * self.avg_cycle_high + (1 - self.q) * self.avg_cycle_low
            if abs(blend - self.t_min_ms) > MIXTURE_IDENTITY_TOL:
                raise SolverError(
                    f"mixture identity violated: blended cycle {blend} != {self.t_min_ms}"
                )


@dataclass(frozen=True)
class _PolicyLine:
    """A solved policy with the multiplier interval on which it stays optimal."""

    policy: StationaryDeterministicPolicy
    avg_cycle: float
    lo: float
    hi: float


def _affine_policy_iteration(
    lam: float,
    model: AopMdp,
    initial: "StationaryDeterministicPolicy | None",
) -> tuple[StationaryDeterministicPolicy, np.ndarray, np.ndarray]:
    """Policy iteration evaluating the reward and cycle parts jointly.

    The per-step reward is ``relaxed - lam * cycle``, so evaluating both
    parts against the same chain gives every action value as an affine
    function of the multiplier: ``base - lam * slope``.  The improvement
    decisions are the ordinary ones at ``lam``; the coefficients come along
    for free and describe the whole multiplier axis.
    """
    policy = initial
    if policy is None:
        ids = np.zeros(model.n_states, dtype=np.intp)
        policy = StationaryDeterministicPolicy.from_action_ids(ids, model)
    n = model.n_states
    idx = np.arange(n)
    for _ in range(MAX_POLICY_ITERATIONS):
        transition = policy_transition_matrix(policy, model)
        ids = policy.action_ids(model)
        parts = np.column_stack([model.relaxed[idx, ids], model.cycle[idx, ids]])
        solution, defect = _solve_gain_bias(transition, parts)
        scale = 1.0 + float(np.abs(parts).max()) + float(np.abs(solution).max())
        if defect > 1e-8 * scale:
            raise SolverError(
                f"policy evaluation defect {defect:.3e} exceeds tolerance"
            )
        bias_q = solution[n : 2 * n, 0]
        bias_tau = solution[n : 2 * n, 1]
        base = model.relaxed + (model.transitions @ bias_q).T
        slope = model.cycle + (model.transitions @ bias_tau).T
        values = base - lam * slope
        best = values.min(axis=1)
        incumbent = values[idx, ids]
        new_ids = np.where(incumbent <= best + TIE_TOL, ids, np.argmin(values, axis=1))
        if np.array_equal(new_ids, ids):
            return policy, base, slope
        policy = StationaryDeterministicPolicy.from_action_ids(new_ids, model)
    raise SolverError("policy iteration did not converge within the round cap")


def _interval_from_values(
    base: np.ndarray, slope: np.ndarray, ids: np.ndarray
) -> tuple[float, float]:
    """Multiplier interval on which the policy behind ``ids`` stays optimal.

    Each (state, action) pair contributes one linear inequality on the
    multiplier through the affine action values ``base - lam * slope``.
    """
    idx = np.arange(base.shape[0])
    beta = base - base[idx, ids][:, None]
    sigma = slope - slope[idx, ids][:, None]

    lo, hi = 0.0, np.inf
    nonzero = np.abs(sigma) > 1e-14
    pos = nonzero & (sigma > 0)
    neg = nonzero & (sigma < 0)
    if pos.any():
        hi = float(((beta[pos] + TIE_TOL) / sigma[pos]).min())
    if neg.any():
        lo = max(lo, float(((beta[neg] + TIE_TOL) / sigma[neg]).max()))
    # flat pairs must already satisfy the inequality; otherwise don't cache
    flat_bad = (~nonzero) & (beta < -TIE_TOL)
    if flat_bad.any():
        return 1.0, 0.0
    return lo, hi


def _solve_line(
    model: AopMdp,
    lam: float,
    warm: "StationaryDeterministicPolicy | None",
    with_interval: bool = True,
) -> _PolicyLine:
    policy, base, slope = _affine_policy_iteration(lam, model, warm)
    avg_cycle = policy_metrics(policy, 0.0, model).avg_cycle
    if with_interval:
        lo, hi = _interval_from_values(base, slope, policy.action_ids(model))
    else:
        lo, hi = lam, lam
    return _PolicyLine(policy, avg_cycle, lo, hi)


def _polish_breakpoint(
    model: AopMdp, lines: list[_PolicyLine], fallback: float
) -> float:
    """Locate the multiplier where the optimal cycle average crosses the bound.

    The cycle average is piecewise constant and non-decreasing in the
    multiplier, so the crossing is the shared edge of the last short-cycle
    piece and the first compliant piece.  Walks/bisects pieces using their
    closed-form intervals; falls back to the raw iterate if no bracket can
    be established.
    """
    t_min = model.cfg.t_min_ms
    short = [l for l in lines if l.avg_cycle < t_min]
    compliant = [l for l in lines if l.avg_cycle >= t_min]
    if not short:
        # bound satisfied from the start: the crossing infimum is zero
        return 0.0 if compliant else fallback
    low = max(short, key=lambda l: l.hi)
    high = min(compliant, key=lambda l: l.lo) if compliant else None
    warm = low.policy

    for _ in range(10_000):
        if high is not None and high.lo <= low.hi + 1e-12 * max(1.0, low.hi):
            return 0.5 * (low.hi + max(high.lo, low.hi))
        if high is None:
            if not np.isfinite(low.hi):
                return fallback  # cycle average never reaches the bound
            probe = low.hi + 1e-9 * max(1.0, low.hi)
        else:
            probe = 0.5 * (low.hi + high.lo)
        line = _solve_line(model, probe, warm)
        warm = line.policy
        if line.avg_cycle >= t_min:
            high = line
        else:
            if line.hi <= low.hi:  # no progress; give up rather than loop
                return fallback
            low = line
    return fallback


def robbins_monro(
    model: AopMdp,
    step_rule: StepRule,
    lambda0: float = 0.0,
    stop_tol: "float | None" = None,
    max_iters: "int | None" = None,
    interval_cache: bool = True,
    polish: bool = True,
) -> LambdaTrace:
    """Drive the multiplier to the sampling-constraint boundary.

    Each iterate solves the unconstrained problem at the current multiplier
    (warm-started from the previous policy), then moves the multiplier by
    ``step(k) * (t_min - avg_cycle)``, clamped at zero.  Stops once the
    multiplier change falls to ``stop_tol`` or the iteration budget is hit.

    With ``polish`` (default) the returned ``final_lambda`` is sharpened to
    the exact constraint-crossing breakpoint, which the raw recursion only
    approaches to within roughly ``stop_tol``; downstream perturbation needs
    the sharper value because the perturbation is smaller than that.
    """
    if lambda0 < 0:
        raise SolverError(f"initial multiplier must be non-negative, got {lambda0}")
    stop_tol = model.cfg.stop_tol if stop_tol is None else stop_tol
    max_iters = model.cfg.max_outer_iters if max_iters is None else max_iters
    t_min = model.cfg.t_min_ms

    lam = float(lambda0)
    previous: "StationaryDeterministicPolicy | None" = None
    # near the fixed point the multiplier straddles a policy breakpoint, so
    # keep every solved line: both sides of the breakpoint stay cached
    lines: list[_PolicyLine] = []
    points: list[TracePoint] = []

    converged = False
    for k in range(1, max_iters + 1):
        line = None
        for idx, cand in enumerate(lines):
            if cand.lo <= lam <= cand.hi:
                line = cand
                if idx:  # keep the hot lines in front; the tail grows long
                    lines[0], lines[idx] = lines[idx], lines[0]
                break
        if line is None:
            line = _solve_line(model, lam, previous, with_interval=interval_cache)
            previous = line.policy
            lines.append(line)
        points.append(TracePoint(k, lam, line.avg_cycle))
        new_lam = max(0.0, lam + step_rule.step(k) * (t_min - line.avg_cycle))
        if abs(new_lam - lam) <= stop_tol:
            lam = new_lam
            converged = True
            break
        lam = new_lam

    final = lam
    if polish:
        usable = lines if interval_cache else []
        if not interval_cache:
            # rebuild piece information around the final iterate
            usable = [_solve_line(model, lam, previous)]
        final = _polish_breakpoint(model, usable, fallback=lam)
    return LambdaTrace(tuple(points), converged=converged, final_lambda=final)


def perturbed_multipliers(lambda_star: float, delta: float) -> PerturbedMultipliers:
    """Multipliers straddling ``lambda_star``; the low one clamps at zero."""
    if delta <= 0:
        raise SolverError(f"perturbation must be positive, got {delta}")
    low = lambda_star - delta
    clamped = low < 0
    return PerturbedMultipliers(lambda_star + delta, max(0.0, low), clamped)


def randomization_factor(t1: float, t2: float, t_min: float) -> RandomizationFactor:
    """Blend probability placing the average cycle exactly at ``t_min``.

    Requires the bracket ``t2 <= t_min <= t1``.  When both cycles coincide
    the bracket degenerates: any blend behaves the same, so the result is 1
    with the degeneracy flagged (or an error if even that cycle is short).
    """
    if t1 < t2:
        raise SolverError(f"cycle bracket reversed: {t1} < {t2}")
    if t1 == t2:
        if t1 >= t_min:
            return RandomizationFactor(1.0, True)
        raise SolverError(
            f"degenerate bracket {t1} ms lies below the sampling bound {t_min} ms"
        )
    if not (t2 <= t_min <= t1):
        raise SolverError(
            f"bracket [{t2}, {t1}] does not contain the sampling bound {t_min}"
        )
    q = (t_min - t2) / (t1 - t2)
    return RandomizationFactor(q, False)


def refine(
    model: AopMdp, lambda_star: float, delta: "float | None" = None
) -> MixturePolicy:
    """Build the constraint-tight mixture around a converged multiplier.

    Solves the perturbed problems (warm-started from the policy at
    ``lambda_star`` so tie-breaking cannot manufacture spurious
    differences), checks the cycle bracket, and blends.
    """
    delta = model.cfg.perturbation if delta is None else delta
    lam_high, lam_low, clamped = perturbed_multipliers(lambda_star, delta)
    star, _, _ = policy_iteration(lambda_star, model)
    high, _, _ = policy_iteration(lam_high, model, initial=star)
    low, _, _ = policy_iteration(lam_low, model, initial=star)
    t_high = policy_metrics(high, 0.0, model).avg_cycle
    t_low = policy_metrics(low, 0.0, model).avg_cycle
    t_min = model.cfg.t_min_ms
    diff = tuple(
        i for i, (a, b) in enumerate(zip(high.actions, low.actions)) if a != b
    )

    if t_high < t_min:
        raise SolverError(
            f"perturbed cycle bracket broken: high-multiplier cycle {t_high} ms is "
            f"below the bound {t_min} ms; increase the perturbation or re-run the "
            "multiplier search"
        )
    if t_high == t_low:
        # identical perturbed policies that meet the bound on their own
        q, degenerate = 1.0, True
    elif t_low > t_min:
        # constraint slack even under the low policy: it is feasible on its own
        q, degenerate = 0.0, True
    else:
        q, degenerate = randomization_factor(t_high, t_low, t_min)

    return MixturePolicy(
        high=high,
        low=low,
        q=q,
        lam_high=lam_high,
        lam_low=lam_low,
        avg_cycle_high=t_high,
        avg_cycle_low=t_low,
        t_min_ms=t_min,
        degenerate=degenerate,
        low_clamped=clamped,
        diff_states=diff,
    )


def mixture_action(mixture: MixturePolicy, state_index: int, rng_draw: float) -> Action:
    """Action of the blend at one state given a uniform draw in [0, 1)."""
    if rng_draw < mixture.q:
        return mixture.high.action(state_index)
    return mixture.low.action(state_index)


def lambda_grid_metrics(
    model: AopMdp, lambdas: "np.ndarray | list[float]"
) -> list[tuple[float, float, float, float]]:
    """(lam, avg_lagrange, avg_relaxed, avg_cycle) of the optimum per grid point.

    Policies are warm-started along the grid; the optima themselves do not
    depend on the warm start.
    """
    out: list[tuple[float, float, float, float]] = []
    previous: "StationaryDeterministicPolicy | None" = None
    for lam in lambdas:
        policy, _, _ = policy_iteration(float(lam), model, initial=previous)
        previous = policy
        m = policy_metrics(policy, float(lam), model)
        out.append((float(lam), m.avg_lagrange, m.avg_relaxed_aop, m.avg_cycle))
    return out
