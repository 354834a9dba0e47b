"""
Pytest configuration and fixtures for hybran tests.
"""

import math
from unittest.mock import patch

import numpy as np
import pytest

from hybrid_automaton.automaton import HybridAutomaton, assemble
from hybrid_automaton.dynamics import LimitCycleParams, generate_traces
from hybrid_automaton.geometry import Box, make_partition
from hybrid_automaton.nn import Activation, Architecture, Layer, NeuralNet, init_network

LINEAR_A = np.array([[0.9, 0.2], [-0.2, 0.9]])
LINEAR_B = np.array([[0.1], [0.05]])


def linear_step(state, u, params):
    """x(k+1) = A x(k) + B u(k); a system a one-layer identity network reproduces exactly."""
    return LINEAR_A @ np.asarray(state) + LINEAR_B @ np.asarray(u)


def linear_oracle_net() -> NeuralNet:
    return NeuralNet(layers=(Layer(weights=np.hstack([LINEAR_A, LINEAR_B]), bias=np.zeros(2), activation="identity"),))


@pytest.fixture
def grid_domain():
    """The 8 x 6 box used by the 12-cell experiment."""
    return Box(lo=[-4.0, -3.0], hi=[4.0, 3.0])


@pytest.fixture
def grid_partition(grid_domain):
    return make_partition(grid_domain, (4, 3))


@pytest.fixture
def limit_cycle_params():
    return LimitCycleParams()


@pytest.fixture
def limit_cycle_traces(limit_cycle_params):
    """Eight short traces started anywhere in [-4, 4] x [-pi, pi]."""
    init_box = Box(lo=[-4.0, -math.pi], hi=[4.0, math.pi])
    return generate_traces(limit_cycle_params, count=8, steps=30, init_box=init_box, seed=3)


@pytest.fixture
def linear_traces(limit_cycle_params):
    init_box = Box(lo=[-3.0, -2.5], hi=[3.0, 2.5])
    return generate_traces(limit_cycle_params, count=6, steps=25, init_box=init_box, seed=11, step_fn=linear_step)


@pytest.fixture
def oracle_automaton(grid_partition, linear_traces, limit_cycle_params) -> HybridAutomaton:
    """Every cell replays the linear ground truth exactly."""
    nets = [linear_oracle_net() for _ in grid_partition.cells]
    return assemble(grid_partition, nets, linear_traces, limit_cycle_params.input_box)


@pytest.fixture
def random_automaton(grid_partition, limit_cycle_params) -> HybridAutomaton:
    """Untrained 3-8-2 tanh networks, a different one per cell."""
    rng = np.random.Generator(np.random.PCG64(5))
    arch = Architecture.shallow(3, 8, 2, Activation.TANH)
    nets = [init_network(arch, rng) for _ in grid_partition.cells]
    return HybridAutomaton(partition=grid_partition, nets=nets, transitions=(), input_box=limit_cycle_params.input_box)


@pytest.fixture
def no_ledger(settings):
    settings.HYBRAN_RECORD_RUNS = False
    return settings


@pytest.fixture
def mock_sentry():
    """Mock Sentry SDK."""
    with patch("sentry_sdk.capture_exception"), patch("sentry_sdk.capture_message"), patch(
        "sentry_sdk.set_tag"
    ), patch("sentry_sdk.set_context"):
        yield
