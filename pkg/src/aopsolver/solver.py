"""Average-reward policy evaluation and policy iteration.

Policy evaluation solves the gain/bias/auxiliary system

    (I - P) g         = 0
    g + (I - P) b     = r
    b + (I - P) mu    = 0

as one stacked least-squares problem.  The first two equations pin the gain;
the third selects the bias normalization (otherwise any ``b + k*e`` would
do).  Improvement is a per-state argmin over ``r(s,a) + P(.|s,a) @ b`` with
the incumbent action retained on ties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from .model import Action, AopMdp

__all__ = [
    "SolverError",
    "NotUnichainError",
    "StationaryDeterministicPolicy",
    "GainBiasSolution",
    "PolicyMetrics",
    "policy_transition_matrix",
    "evaluate_policy",
    "improve_policy",
    "policy_iteration",
    "stationary_distribution",
    "policy_metrics",
]

# incumbent is kept when within this of the per-state minimum
TIE_TOL = 1e-10
EVAL_RESIDUAL_TOL = 1e-8
STATIONARY_TOL = 1e-10
MAX_POLICY_ITERATIONS = 200


class SolverError(RuntimeError):
    """Policy evaluation or iteration failed."""


class NotUnichainError(SolverError):
    """The policy chain has more than one recurrent class."""

    def __init__(self, classes: list[list[int]]):
        self.classes = classes
        preview = "; ".join(str(c[:8]) for c in classes)
        super().__init__(
            f"policy chain has {len(classes)} recurrent classes: {preview}"
        )


@dataclass(frozen=True)
class StationaryDeterministicPolicy:
    """One action per state, indexed by the dense state order."""

    actions: tuple[Action, ...]

    def __post_init__(self) -> None:
        if not self.actions:
            raise SolverError("policy must cover at least one state")

    def action(self, state_index: int) -> Action:
        return self.actions[state_index]

    def action_ids(self, model: AopMdp) -> np.ndarray:
        lookup = {a: i for i, a in enumerate(model.actions)}
        try:
            return np.array([lookup[a] for a in self.actions], dtype=np.intp)
        except KeyError as exc:
            raise SolverError(f"policy uses unknown action {exc.args[0]}") from None

    @classmethod
    def from_action_ids(cls, ids: np.ndarray, model: AopMdp) -> "StationaryDeterministicPolicy":
        return cls(tuple(model.actions[int(i)] for i in ids))


@dataclass(frozen=True)
class GainBiasSolution:
    """Gain, bias and auxiliary vectors with the solve's residual."""

    gain: np.ndarray
    bias: np.ndarray
    aux: np.ndarray
    residual: float


@dataclass(frozen=True)
class PolicyMetrics:
    """Long-run averages of a policy under its stationary distribution."""

    stationary: np.ndarray
    avg_lagrange: float
    avg_relaxed_aop: float
    avg_cycle: float


def policy_transition_matrix(
    policy: StationaryDeterministicPolicy, model: AopMdp
) -> np.ndarray:
    """Dense state-transition matrix of the chain induced by ``policy``."""
    ids = policy.action_ids(model)
    if len(ids) != model.n_states:
        raise SolverError(
            f"policy covers {len(ids)} states, model has {model.n_states}"
        )
    rows = model.transitions[ids, np.arange(model.n_states), :]
    return rows


def _policy_rewards(
    policy: StationaryDeterministicPolicy, model: AopMdp, lam: float
) -> np.ndarray:
    ids = policy.action_ids(model)
    idx = np.arange(model.n_states)
    return model.relaxed[idx, ids] - lam * model.cycle[idx, ids]


def _solve_gain_bias(transition: np.ndarray, rewards: np.ndarray) -> tuple[np.ndarray, float]:
    """Minimum-norm solve of the stacked evaluation system.

    ``rewards`` may carry several columns; a solution column is returned for
    each.  One refinement pass keeps the defect near machine precision even
    for rewards in the thousands.
    """
    n = transition.shape[0]
    m = np.eye(n) - transition
    stacked = np.zeros((3 * n, 3 * n))
    for block in range(3):
        lo = block * n
        stacked[lo : lo + n, lo : lo + n] = m
        if block:
            np.fill_diagonal(stacked[lo : lo + n, lo - n : lo], 1.0)

    rhs = np.zeros((3 * n, rewards.shape[1]))
    rhs[n : 2 * n] = rewards
    solution, *_ = scipy.linalg.lstsq(
        stacked, rhs, lapack_driver="gelsy", check_finite=False
    )
    # one refinement pass: tie-breaking downstream needs defects well below
    # the improvement tolerance even for rewards in the thousands
    correction, *_ = scipy.linalg.lstsq(
        stacked, rhs - stacked @ solution, lapack_driver="gelsy", check_finite=False
    )
    solution = solution + correction
    defect = float(np.abs(stacked @ solution - rhs).max())
    return solution, defect


def evaluate_policy(
    policy: StationaryDeterministicPolicy, lam: float, model: AopMdp
) -> GainBiasSolution:
    """Solve the three evaluation equations for (gain, bias, aux) at ``lam``."""
    transition = policy_transition_matrix(policy, model)
    rewards = _policy_rewards(policy, model, lam)
    solution, defect = _solve_gain_bias(transition, rewards[:, None])
    n = model.n_states
    x = solution[:, 0]
    scale = 1.0 + float(np.abs(rewards).max()) + float(np.abs(x).max())
    if defect > EVAL_RESIDUAL_TOL * scale:
        raise SolverError(
            f"policy evaluation defect {defect:.3e} exceeds tolerance "
            f"(transition matrix is likely broken)"
        )
    return GainBiasSolution(
        gain=x[:n].copy(), bias=x[n : 2 * n].copy(), aux=x[2 * n :].copy(), residual=defect
    )


def _action_values(model: AopMdp, bias: np.ndarray, lam: float) -> np.ndarray:
    """(n_states, n_actions) table of r(s,a) + sum_s' P(s'|s,a) bias(s')."""
    continuation = model.transitions @ bias  # (A, N)
    return model.lagrange_rewards(lam) + continuation.T


def improve_policy(
    policy: StationaryDeterministicPolicy,
    sol: GainBiasSolution,
    model: AopMdp,
    lam: float,
) -> StationaryDeterministicPolicy:
    """One improvement sweep; keeps the incumbent action on ties.

    Ties beyond the incumbent resolve to the lexicographically smallest
    (wait index, origin) action, which is the enumeration order.
    """
    values = _action_values(model, sol.bias, lam)
    best = values.min(axis=1)
    ids = policy.action_ids(model)
    incumbent_vals = values[np.arange(model.n_states), ids]
    new_ids = np.where(
        incumbent_vals <= best + TIE_TOL, ids, np.argmin(values, axis=1)
    )
    if np.array_equal(new_ids, ids):
        return policy
    return StationaryDeterministicPolicy.from_action_ids(new_ids, model)


def policy_iteration(
    lam: float,
    model: AopMdp,
    initial: "StationaryDeterministicPolicy | None" = None,
) -> tuple[StationaryDeterministicPolicy, GainBiasSolution, int]:
    """Alternate evaluation and improvement until the policy repeats.

    Returns the converged policy, its evaluation, and the number of
    evaluation/improvement rounds performed.
    """
    if lam < 0:
        raise SolverError(f"multiplier must be non-negative, got {lam!r}")
    policy = initial
    if policy is None:
        policy = StationaryDeterministicPolicy.from_action_ids(
            np.zeros(model.n_states, dtype=np.intp), model
        )
    for iteration in range(1, MAX_POLICY_ITERATIONS + 1):
        sol = evaluate_policy(policy, lam, model)
        improved = improve_policy(policy, sol, model, lam)
        if improved.actions == policy.actions:
            return policy, sol, iteration
        policy = improved
    raise SolverError(
        f"policy iteration did not converge within {MAX_POLICY_ITERATIONS} rounds"
    )


def _recurrent_classes(transition: np.ndarray) -> list[list[int]]:
    """Strongly connected components with no outgoing edges."""
    support = transition > 0.0
    n_comp, labels = connected_components(support, directed=True, connection="strong")
    has_exit = np.zeros(n_comp, dtype=bool)
    src, dst = np.nonzero(support)
    crossing = labels[src] != labels[dst]
    has_exit[labels[src[crossing]]] = True
    return [
        np.flatnonzero(labels == comp).tolist()
        for comp in range(n_comp)
        if not has_exit[comp]
    ]


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """Unique invariant distribution of a unichain stochastic matrix."""
    transition = np.asarray(transition, dtype=float)
    n = transition.shape[0]
    if transition.shape != (n, n):
        raise SolverError(f"transition matrix must be square, got {transition.shape}")
    classes = _recurrent_classes(transition)
    if len(classes) != 1:
        raise NotUnichainError(classes)

    system = np.vstack([transition.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    rho, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    rho = np.where(np.abs(rho) < 1e-15, 0.0, rho)
    defect = float(np.abs(rho @ transition - rho).max())
    if defect > STATIONARY_TOL or rho.min() < -1e-12:
        raise SolverError(f"stationary solve failed, defect {defect:.3e}")
    rho = np.maximum(rho, 0.0)
    return rho / rho.sum()


def policy_metrics(
    policy: StationaryDeterministicPolicy, lam: float, model: AopMdp
) -> PolicyMetrics:
    """Long-run cycle length, relaxed age and Lagrange averages of a policy."""
    transition = policy_transition_matrix(policy, model)
    rho = stationary_distribution(transition)
    ids = policy.action_ids(model)
    idx = np.arange(model.n_states)
    avg_cycle = float(rho @ model.cycle[idx, ids])
    avg_relaxed = float(rho @ model.relaxed[idx, ids])
    return PolicyMetrics(
        stationary=rho,
        avg_lagrange=avg_relaxed - lam * avg_cycle,
        avg_relaxed_aop=avg_relaxed,
        avg_cycle=avg_cycle,
    )
