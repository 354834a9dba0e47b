"""
Ground-truth benchmark systems and trajectory generation.

Only the noisy limit cycle ships; ``generate_traces`` accepts any step function
with the ``StepFunction`` signature.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional

import numpy as np

from hybrid_automaton.exceptions import InvalidArgumentError
from hybrid_automaton.geometry import Box

logger = logging.getLogger(__name__)

PRNG_ALGORITHM = "numpy.PCG64"

StepFunction = Callable[[np.ndarray, np.ndarray, "LimitCycleParams"], np.ndarray]


def make_rng(seed: int) -> np.random.Generator:
    if seed < 0:
        raise InvalidArgumentError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class LimitCycleParams:
    tau: float = 0.1
    omega: float = 2.0 * math.pi / 3.0
    mu: float = 0.2
    delta: float = 1.5
    wrap_theta: bool = True

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidArgumentError(f"tau must be positive, got {self.tau}")
        if not self.delta >= 0:
            raise InvalidArgumentError(f"delta must be non-negative, got {self.delta}")

    @property
    def input_box(self) -> Box:
        return Box(lo=[self.mu - self.delta], hi=[self.mu + self.delta])

    def to_dict(self) -> dict:
        return asdict(self)


def wrap_angle(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    if -math.pi < theta <= math.pi:
        return theta
    return math.pi - math.fmod(math.fmod(math.pi - theta, 2.0 * math.pi) + 2.0 * math.pi, 2.0 * math.pi)


def limit_cycle_step(state, u, params: LimitCycleParams) -> np.ndarray:
    r, theta = np.asarray(state, dtype=np.float64).reshape(-1)
    u = float(np.asarray(u, dtype=np.float64).reshape(-1)[0])
    if not (math.isfinite(r) and math.isfinite(theta) and math.isfinite(u)):
        raise InvalidArgumentError(f"limit cycle step needs finite values, got state=({r}, {theta}) u={u}")

    tau = params.tau
    r_next = (1.0 + tau) * r - tau * r**3 + tau * u
    theta_next = theta + tau * params.omega
    if params.wrap_theta:
        theta_next = wrap_angle(theta_next)
    return np.array([r_next, theta_next])


@dataclass(frozen=True, eq=False)
class Trace:
    id: int
    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        inputs = np.asarray(self.inputs, dtype=np.float64)
        if states.ndim != 2 or inputs.ndim != 2:
            raise InvalidArgumentError("trace states and inputs must be 2-D arrays")
        if states.shape[0] != inputs.shape[0] + 1:
            raise InvalidArgumentError(
                f"trace {self.id}: {states.shape[0]} states need {states.shape[0] - 1} inputs, got {inputs.shape[0]}"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)

    @property
    def steps(self) -> int:
        return self.inputs.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.inputs, other.inputs)
        )

    __hash__ = None


def generate_trace(
    params: LimitCycleParams,
    trace_id: int,
    steps: int,
    init_box: Box,
    seed: int,
    step_fn: Optional[StepFunction] = None,
) -> Trace:
    step_fn = step_fn or limit_cycle_step
    rng = make_rng(seed ^ trace_id)

    state = init_box.sample(rng)
    inputs = rng.uniform(params.mu - params.delta, params.mu + params.delta, size=(steps, 1))

    states = np.empty((steps + 1, init_box.dim))
    states[0] = state
    for k in range(steps):
        states[k + 1] = step_fn(states[k], inputs[k], params)
    return Trace(id=trace_id, states=states, inputs=inputs)


def generate_traces(
    params: LimitCycleParams,
    count: int,
    steps: int,
    init_box: Box,
    seed: int,
    step_fn: Optional[StepFunction] = None,
) -> List[Trace]:
    """``count`` traces of ``steps`` transitions; trace i uses the PCG64 stream seeded with ``seed ^ i``."""
    if count < 1:
        raise InvalidArgumentError(f"count must be at least 1, got {count}")
    if steps < 1:
        raise InvalidArgumentError(f"steps must be at least 1, got {steps}")

    traces = [generate_trace(params, i, steps, init_box, seed, step_fn) for i in range(count)]
    logger.info(
        "[dynamics] Generated traces",
        extra={"count": count, "steps": steps, "seed": seed, "prng": PRNG_ALGORITHM},
    )
    return traces
