import numpy as np
import pytest

from aopsolver import (
    Benchmark,
    Mixture,
    StepRule,
    build_model,
    load_config,
    refine,
    robbins_monro,
    simulate,
)


@pytest.fixture(scope="session")
def default_setup():
    cfg, chan, data = load_config()
    return cfg, chan, data


@pytest.fixture(scope="session")
def model(default_setup):
    cfg, chan, _ = default_setup
    return build_model(cfg, chan)


@pytest.fixture(scope="session")
def scaled_trace(model):
    return robbins_monro(model, StepRule.scaled(model.cfg.step_factor))


@pytest.fixture(scope="session")
def mixture(model, scaled_trace):
    return refine(model, scaled_trace.final_lambda)


@pytest.fixture(scope="session")
def bench_runs(model, mixture):
    """The four policies simulated at the default scale (n=1e5, seed 42)."""
    n, seed = 100_000, 42
    return {
        "optimal": simulate(Mixture(mixture), n, seed, model),
        "aezw": simulate(Benchmark.AEZW, n, seed, model),
        "aecw": simulate(Benchmark.AECW, n, seed, model),
        "alcw": simulate(Benchmark.ALCW, n, seed, model),
    }


def batch_standard_error(values: np.ndarray, n_batches: int = 100) -> float:
    """Batch-means standard error for a correlated per-update series."""
    usable = (len(values) // n_batches) * n_batches
    batch_means = values[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(batch_means.std(ddof=1) / np.sqrt(n_batches))
