"""
Per-cell training sets: trace segmentation by partition cell and input-output
pair extraction. A pair ([x(k); u(k)], x(k+1)) belongs to the cell holding x(k).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from hybrid_automaton.dynamics import Trace, make_rng
from hybrid_automaton.exceptions import EmptyDatasetError, InvalidArgumentError
from hybrid_automaton.geometry import Partition, locate_many

logger = logging.getLogger(__name__)

DEFAULT_MIN_PAIRS = 10


@dataclass(frozen=True, eq=False)
class CellDataset:
    cell: int
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise InvalidArgumentError(f"cell {self.cell}: inputs and targets have different pair counts")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def pairs(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.inputs, self.targets))

    @property
    def is_empty(self) -> bool:
        return len(self) == 0


@dataclass
class DatasetStats:
    counts: List[int]
    min_pairs: int
    sparse_cells: List[int] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.counts)

    def to_json(self) -> List[Dict]:
        sparse = set(self.sparse_cells)
        return [{"cell": q, "pairs": n, "sparse": q in sparse} for q, n in enumerate(self.counts)]


def stack_pairs(traces: Sequence[Trace]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All consecutive pairs of ``traces``: (x(k), [x(k); u(k)], x(k+1)) row blocks."""
    if not traces:
        return np.empty((0, 0)), np.empty((0, 0)), np.empty((0, 0))
    sources = np.concatenate([trace.states[:-1] for trace in traces])
    inputs = np.concatenate([np.hstack([trace.states[:-1], trace.inputs]) for trace in traces])
    targets = np.concatenate([trace.states[1:] for trace in traces])
    return sources, inputs, targets


def segment(traces: Sequence[Trace], p: Partition, strict: bool = False) -> List[CellDataset]:
    """
    One dataset per cell, index-aligned with ``p.cells``.

    With ``strict`` only pairs whose successor stays in the source cell are kept,
    which drops every boundary-crossing step.
    """
    for trace in traces:
        if trace.state_dim != p.dim:
            raise InvalidArgumentError(
                f"trace {trace.id} has state dimension {trace.state_dim}, partition has {p.dim}"
            )
    if traces and len({trace.input_dim for trace in traces}) != 1:
        raise InvalidArgumentError("traces disagree on input dimension")

    input_dim = traces[0].input_dim if traces else 0
    sources, inputs, targets = stack_pairs(traces)
    if sources.shape[0] == 0:
        return [
            CellDataset(cell=q, inputs=np.empty((0, p.dim + input_dim)), targets=np.empty((0, p.dim)))
            for q in range(len(p))
        ]

    cells, exterior = locate_many(p, sources)
    keep = np.ones(cells.shape[0], dtype=bool)
    if strict:
        successor_cells, _ = locate_many(p, targets)
        keep = successor_cells == cells

    datasets = []
    for q in range(len(p)):
        mask = (cells == q) & keep
        datasets.append(CellDataset(cell=q, inputs=inputs[mask], targets=targets[mask]))

    logger.info(
        "[dataset] Traces segmented",
        extra={
            "traces": len(traces),
            "pairs": int(keep.sum()),
            "exterior_sources": int(exterior.sum()),
            "strict": strict,
        },
    )
    return datasets


def dataset_stats(datasets: Sequence[CellDataset], min_pairs: int = DEFAULT_MIN_PAIRS) -> DatasetStats:
    counts = [len(dataset) for dataset in datasets]
    sparse = [dataset.cell for dataset in datasets if len(dataset) < min_pairs]
    if sparse:
        logger.info("[dataset] Sparse cells found", extra={"cells": sparse, "min_pairs": min_pairs})
    return DatasetStats(counts=counts, min_pairs=min_pairs, sparse_cells=sparse)


def merge_datasets(datasets: Sequence[CellDataset], cell: int = 0) -> CellDataset:
    """All pairs of ``datasets`` as a single dataset, used for the global network."""
    nonempty = [dataset for dataset in datasets if not dataset.is_empty]
    if not nonempty:
        raise EmptyDatasetError("no training pairs in any cell")
    return CellDataset(
        cell=cell,
        inputs=np.concatenate([dataset.inputs for dataset in nonempty]),
        targets=np.concatenate([dataset.targets for dataset in nonempty]),
    )


def split_traces(traces: Sequence[Trace], holdout: float, seed: int) -> Tuple[List[Trace], List[Trace]]:
    """Trace-level train/test split; at least one trace stays on each side when possible."""
    if not 0.0 <= holdout < 1.0:
        raise InvalidArgumentError(f"holdout fraction must be in [0, 1), got {holdout}")
    traces = list(traces)
    held = int(round(holdout * len(traces)))
    if holdout > 0 and len(traces) > 1:
        held = min(max(held, 1), len(traces) - 1)
    order = make_rng(seed).permutation(len(traces))
    test_ids = set(order[:held].tolist())
    train = [trace for i, trace in enumerate(traces) if i not in test_ids]
    test = [trace for i, trace in enumerate(traces) if i in test_ids]
    return train, test
