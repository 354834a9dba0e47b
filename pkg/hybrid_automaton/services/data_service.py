import logging
from typing import List, Optional, Tuple

import sentry_sdk

from hybrid_automaton.adapters.storage import PathLike
from hybrid_automaton.dataset import split_traces
from hybrid_automaton.dynamics import LimitCycleParams, StepFunction, Trace, generate_traces
from hybrid_automaton.geometry import Box
from hybrid_automaton.repositories.trace_repository import TraceRepository

logger = logging.getLogger(__name__)

SYSTEMS = {"limit-cycle": LimitCycleParams}


class DataService:
    def __init__(self, repository: Optional[TraceRepository] = None):
        self.repository = repository or TraceRepository()

    def generate(
        self,
        out: PathLike,
        params: LimitCycleParams,
        count: int,
        steps: int,
        init_box: Box,
        seed: int,
        step_fn: Optional[StepFunction] = None,
    ) -> Tuple[List[Trace], int]:
        """Generate traces and write them to ``out``; returns the traces and the CSV row count (header excluded)."""
        try:
            traces = generate_traces(params, count, steps, init_box, seed, step_fn)
            rows = self.repository.save(out, traces)
            logger.info(
                "[DataService] Dataset generated",
                extra={"out": str(out), "traces": count, "steps": steps, "rows": rows},
            )
            return traces, rows
        except Exception as e:
            sentry_sdk.set_tag("seed", seed)
            sentry_sdk.set_context("data_generation", {"out": str(out), "count": count, "steps": steps})
            sentry_sdk.capture_exception(e)
            logger.error("[DataService] Error generating dataset", extra={"error": str(e)}, exc_info=True)
            raise

    def load(self, path: PathLike) -> List[Trace]:
        return self.repository.load(path)

    def holdout(self, traces: List[Trace], fraction: float, seed: int) -> Tuple[List[Trace], List[Trace]]:
        train, test = split_traces(traces, fraction, seed)
        logger.info("[DataService] Holdout split", extra={"train": len(train), "test": len(test)})
        return train, test
