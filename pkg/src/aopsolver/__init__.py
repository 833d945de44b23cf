"""Age-of-processing CMDP solver and simulator for edge-computing status updates."""

from .config import ConfigError, config_digest, load_config
from .lagrangian import (
    LambdaTrace,
    MixturePolicy,
    StepRule,
    lambda_grid_metrics,
    mixture_action,
    perturbed_multipliers,
    randomization_factor,
    refine,
    robbins_monro,
)
from .model import (
    Action,
    AopMdp,
    AopState,
    ChannelModel,
    ModelError,
    ProcessingOrigin,
    StateSpace,
    SystemConfig,
    age_after_processing,
    build_model,
    edge_execution_time,
    enumerate_actions,
    enumerate_states,
    lagrange_reward,
    local_processing_time,
    offloading_rate,
    path_loss_db,
    raw_area_reward,
    relaxed_reward,
    transition_distribution,
    transmission_time_from_rate,
)
from .simulate import (
    Benchmark,
    Mixture,
    SimulationError,
    Solved,
    Trajectory,
    benchmark_decision,
    ratio_report,
    simulate,
)
from .solver import (
    GainBiasSolution,
    NotUnichainError,
    PolicyMetrics,
    SolverError,
    StationaryDeterministicPolicy,
    evaluate_policy,
    improve_policy,
    policy_iteration,
    policy_metrics,
    policy_transition_matrix,
    stationary_distribution,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ConfigError",
    "config_digest",
    "load_config",
    "LambdaTrace",
    "MixturePolicy",
    "StepRule",
    "lambda_grid_metrics",
    "mixture_action",
    "perturbed_multipliers",
    "randomization_factor",
    "refine",
    "robbins_monro",
    "Action",
    "AopMdp",
    "AopState",
    "ChannelModel",
    "ModelError",
    "ProcessingOrigin",
    "StateSpace",
    "SystemConfig",
    "age_after_processing",
    "build_model",
    "edge_execution_time",
    "enumerate_actions",
    "enumerate_states",
    "lagrange_reward",
    "local_processing_time",
    "offloading_rate",
    "path_loss_db",
    "raw_area_reward",
    "relaxed_reward",
    "transition_distribution",
    "transmission_time_from_rate",
    "Benchmark",
    "Mixture",
    "SimulationError",
    "Solved",
    "Trajectory",
    "benchmark_decision",
    "ratio_report",
    "simulate",
    "GainBiasSolution",
    "NotUnichainError",
    "PolicyMetrics",
    "SolverError",
    "StationaryDeterministicPolicy",
    "evaluate_policy",
    "improve_policy",
    "policy_iteration",
    "policy_metrics",
    "policy_transition_matrix",
    "stationary_distribution",
]
