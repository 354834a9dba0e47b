import logging
from typing import Dict, List, Optional, Sequence

import sentry_sdk

from hybrid_automaton.adapters.storage import PathLike
from hybrid_automaton.automaton import evaluate_mse
from hybrid_automaton.repositories.model_repository import ModelRepository
from hybrid_automaton.repositories.trace_repository import TraceRepository

logger = logging.getLogger(__name__)


class EvaluationService:
    """One-step prediction error of saved models on a shared trace file."""

    def __init__(self, models: Optional[ModelRepository] = None, traces: Optional[TraceRepository] = None):
        self.models = models or ModelRepository()
        self.traces = traces or TraceRepository()

    def evaluate(self, model_paths: Sequence[PathLike], traces_path: PathLike) -> List[Dict]:
        traces = self.traces.load(traces_path)
        rows = []
        for path in model_paths:
            automaton = self.models.load(path)
            try:
                report = evaluate_mse(automaton, traces)
            except Exception as e:
                sentry_sdk.set_tag("model", str(path))
                sentry_sdk.set_context("evaluation", {"model": str(path), "traces": str(traces_path)})
                sentry_sdk.capture_exception(e)
                logger.error("[EvaluationService] Error evaluating model", extra={"model": str(path)}, exc_info=True)
                raise

            row = {"model": str(path), "mode": automaton.meta.get("mode"), **report.to_dict()}
            rows.append(row)
            logger.info(
                "[EvaluationService] Model evaluated",
                extra={"model": str(path), "mse": report.mse, "pairs": report.pairs},
            )
        return rows
