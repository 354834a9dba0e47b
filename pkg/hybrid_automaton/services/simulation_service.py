import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import sentry_sdk

from hybrid_automaton.automaton import HybridAutomaton, simulate
from hybrid_automaton.dynamics import make_rng
from hybrid_automaton.exceptions import InvalidArgumentError
from hybrid_automaton.geometry import Box

logger = logging.getLogger(__name__)


@dataclass
class SimulationBatch:
    trajectories: np.ndarray
    cells: List[List[int]]
    exterior_steps: List[List[int]]


class SimulationService:
    def run(
        self,
        automaton: HybridAutomaton,
        steps: int,
        seed: int,
        x0: Optional[np.ndarray] = None,
        init_box: Optional[Box] = None,
        count: int = 1,
        input_box: Optional[Box] = None,
    ) -> SimulationBatch:
        """
        ``count`` executions with inputs drawn uniformly from the input box.
        Initial states are ``x0`` when given, otherwise uniform draws from ``init_box``.
        """
        if steps < 0:
            raise InvalidArgumentError(f"steps must be non-negative, got {steps}")
        if count < 1:
            raise InvalidArgumentError(f"count must be at least 1, got {count}")
        if x0 is None and init_box is None:
            raise InvalidArgumentError("either an initial state or an initial box is required")

        input_box = input_box or automaton.input_box
        rng = make_rng(seed)
        trajectories, cells, exterior = [], [], []
        try:
            for _ in range(count):
                start = np.asarray(x0, dtype=np.float64) if x0 is not None else init_box.sample(rng)
                inputs = input_box.sample(rng, steps) if steps else np.empty((0, automaton.input_dim))
                result = simulate(automaton, start, inputs)
                trajectories.append(result.trajectory)
                cells.append(result.cells)
                exterior.append(result.exterior_steps)
        except Exception as e:
            sentry_sdk.set_tag("seed", seed)
            sentry_sdk.set_context("simulation", {"steps": steps, "count": count})
            sentry_sdk.capture_exception(e)
            logger.error("[SimulationService] Error simulating", extra={"error": str(e)}, exc_info=True)
            raise

        logger.info(
            "[SimulationService] Simulations finished",
            extra={"count": count, "steps": steps, "exterior_runs": sum(1 for events in exterior if events)},
        )
        return SimulationBatch(trajectories=np.stack(trajectories), cells=cells, exterior_steps=exterior)
