"""
Training orchestration: segmentation, sparse-cell policy, per-cell training on
the local process pool or on Celery workers, and automaton assembly.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import sentry_sdk
from celery import group
from django.conf import settings

from hybrid_automaton.automaton import HybridAutomaton, assemble
from hybrid_automaton.dataset import CellDataset, DatasetStats, dataset_stats, merge_datasets, segment
from hybrid_automaton.dynamics import PRNG_ALGORITHM, Trace
from hybrid_automaton.exceptions import EmptyDatasetError, InvalidArgumentError
from hybrid_automaton.geometry import Box, make_partition
from hybrid_automaton.nn import Architecture, TrainConfig, TrainingReport, TrainResult, cell_config, train, train_all
from hybrid_automaton.repositories.run_repository import utc_now_iso
from hybrid_automaton.tasks import cell_job_payload, result_from_payload, train_cell_task

logger = logging.getLogger(__name__)

BACKENDS = ("local", "celery")
MODES = ("hybrid", "single")


@dataclass
class TrainingOutcome:
    automaton: HybridAutomaton
    report: TrainingReport
    stats: DatasetStats
    fallback_cells: List[int] = field(default_factory=list)
    fallback_seconds: float = 0.0

    @property
    def timings(self) -> Dict[str, float]:
        return {
            "parallel_seconds": self.report.parallel_seconds + self.fallback_seconds,
            "serial_seconds": self.report.serial_seconds + self.fallback_seconds,
            "workers": self.report.workers,
        }


class TrainingService:
    def __init__(
        self,
        backend: Optional[str] = None,
        workers: Optional[int] = None,
        min_pairs: Optional[int] = None,
        sparse_fallback: Optional[bool] = None,
    ):
        self.backend = backend or settings.HYBRAN_TRAINING_BACKEND
        self.workers = workers or settings.HYBRAN_THREADS
        self.min_pairs = settings.HYBRAN_MIN_CELL_PAIRS if min_pairs is None else min_pairs
        self.sparse_fallback = settings.HYBRAN_SPARSE_FALLBACK if sparse_fallback is None else sparse_fallback
        if self.backend not in BACKENDS:
            raise InvalidArgumentError(f"unknown training backend {self.backend!r}, expected one of {BACKENDS}")

    def train_model(
        self,
        traces: Sequence[Trace],
        domain: Box,
        segments: Sequence[int],
        arch: Architecture,
        cfg: TrainConfig,
        input_box: Box,
        mode: str = "hybrid",
        strict: bool = False,
    ) -> TrainingOutcome:
        if mode not in MODES:
            raise InvalidArgumentError(f"unknown training mode {mode!r}, expected one of {MODES}")
        if mode == "single":
            segments = [1] * domain.dim

        try:
            partition = make_partition(domain, segments)
            datasets = segment(traces, partition, strict=strict)
            stats = dataset_stats(datasets, self.min_pairs)

            fallback_cells = [d.cell for d in datasets if d.is_empty]
            if self.sparse_fallback:
                fallback_cells = sorted(set(fallback_cells) | set(stats.sparse_cells))
            skipped = set(fallback_cells)
            trainable = [d for d in datasets if d.cell not in skipped]

            report = self._train_cells(trainable, arch, cfg, len(datasets))

            fallback_seconds = 0.0
            nets = list(report.nets)
            if fallback_cells:
                global_result = self._train_global(datasets, arch, cfg)
                fallback_seconds = global_result.seconds
                for q in fallback_cells:
                    nets[q] = global_result.net
                logger.info(
                    "[TrainingService] Global network substituted",
                    extra={"cells": fallback_cells, "loss": global_result.loss},
                )

            meta = {
                "mode": mode,
                "seed": cfg.seed,
                "prng": PRNG_ALGORITHM,
                "arch": arch.to_dict(),
                "train_config": cfg.to_dict(),
                "trained_at": utc_now_iso(),
                "strict_segmentation": strict,
                "pairs": stats.to_json(),
                "fallback_cells": fallback_cells,
                "losses": report.losses,
                "parallel_seconds": report.parallel_seconds + fallback_seconds,
                "serial_seconds": report.serial_seconds + fallback_seconds,
            }
            automaton = assemble(partition, nets, traces, input_box, meta=meta)
        except Exception as e:
            sentry_sdk.set_tag("training_mode", mode)
            sentry_sdk.set_tag("training_backend", self.backend)
            sentry_sdk.set_context(
                "training",
                {"segments": list(segments), "arch": arch.to_dict(), "config": cfg.to_dict(), "traces": len(traces)},
            )
            sentry_sdk.capture_exception(e)
            logger.error("[TrainingService] Error training model", extra={"error": str(e)}, exc_info=True)
            raise

        outcome = TrainingOutcome(
            automaton=automaton,
            report=report,
            stats=stats,
            fallback_cells=fallback_cells,
            fallback_seconds=fallback_seconds,
        )
        logger.info(
            "[TrainingService] Model trained",
            extra={"mode": mode, "cells": len(datasets), "backend": self.backend, **outcome.timings},
        )
        return outcome

    def _train_cells(
        self, datasets: Sequence[CellDataset], arch: Architecture, cfg: TrainConfig, cell_count: int
    ) -> TrainingReport:
        if self.backend == "celery":
            partial = self._train_on_celery(datasets, arch, cfg)
        else:
            partial = train_all(datasets, arch, cfg, workers=self.workers)

        results: List[Optional[TrainResult]] = [None] * cell_count
        for result in partial.results:
            results[result.cell] = result
        return TrainingReport(results=results, parallel_seconds=partial.parallel_seconds, workers=partial.workers)

    def _train_on_celery(self, datasets: Sequence[CellDataset], arch: Architecture, cfg: TrainConfig) -> TrainingReport:
        started = time.perf_counter()
        jobs = group(train_cell_task.s(cell_job_payload(d, arch, cell_config(cfg, d.cell))) for d in datasets)
        payloads = jobs.apply_async().get() if datasets else []
        elapsed = time.perf_counter() - started
        logger.info("[TrainingService] Celery training finished", extra={"cells": len(payloads), "seconds": elapsed})
        return TrainingReport(
            results=[result_from_payload(payload) for payload in payloads],
            parallel_seconds=elapsed,
            workers=len(payloads),
        )

    def _train_global(self, datasets: Sequence[CellDataset], arch: Architecture, cfg: TrainConfig) -> TrainResult:
        try:
            merged = merge_datasets(datasets, cell=len(datasets))
        except EmptyDatasetError as e:
            raise EmptyDatasetError("no training pairs in any cell; cannot build a fallback network") from e
        return train(merged, arch, cfg)


def input_box_of(traces: Sequence[Trace]) -> Box:
    """Bounding box of every recorded input."""
    inputs = np.concatenate([trace.inputs for trace in traces])
    return Box(lo=inputs.min(axis=0), hi=inputs.max(axis=0))
