"""
The learned hybrid automaton: one network per partition cell, transitions
inferred from observed cell changes, nearest-cell dispatch outside the domain.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from hybrid_automaton.dataset import stack_pairs
from hybrid_automaton.dynamics import Trace
from hybrid_automaton.exceptions import InvalidArgumentError, ModelValidationError
from hybrid_automaton.geometry import (
    BOUNDARY_TOLERANCE,
    Box,
    Partition,
    as_state,
    bounding_box,
    locate,
    locate_many,
    make_partition,
)
from hybrid_automaton.nn import NeuralNet, forward

logger = logging.getLogger(__name__)

MODEL_VERSION = 1
EXTERIOR_POLICY = "nearest-cell"


@dataclass(frozen=True, eq=False)
class Transition:
    source: int
    target: int
    guard: Box
    witnesses: int = 1

    def to_dict(self) -> dict:
        return {"from": self.source, "to": self.target, "guard": self.guard.to_dict(), "witnesses": self.witnesses}

    @classmethod
    def from_dict(cls, data: dict) -> "Transition":
        return cls(
            source=int(data["from"]),
            target=int(data["to"]),
            guard=Box.from_dict(data["guard"]),
            witnesses=int(data.get("witnesses", 1)),
        )


@dataclass(frozen=True, eq=False)
class HybridAutomaton:
    partition: Partition
    nets: Tuple[NeuralNet, ...]
    transitions: Tuple[Transition, ...]
    input_box: Box
    meta: Dict = field(default_factory=dict)
    exterior_policy: str = EXTERIOR_POLICY

    def __post_init__(self):
        object.__setattr__(self, "nets", tuple(self.nets))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        self.validate()

    @property
    def state_dim(self) -> int:
        return self.partition.dim

    @property
    def input_dim(self) -> int:
        return self.input_box.dim

    def validate(self) -> None:
        cells = self.partition.cells
        if len(self.nets) != len(cells):
            raise InvalidArgumentError(f"{len(self.nets)} networks for {len(cells)} cells")
        for q, net in enumerate(self.nets):
            if net.input_dim != self.state_dim + self.input_dim or net.output_dim != self.state_dim:
                raise InvalidArgumentError(
                    f"network {q} maps {net.input_dim}->{net.output_dim}, "
                    f"expected {self.state_dim + self.input_dim}->{self.state_dim}"
                )
        for edge in self.transitions:
            if not (0 <= edge.source < len(cells) and 0 <= edge.target < len(cells)):
                raise InvalidArgumentError(f"transition ({edge.source}, {edge.target}) references an unknown cell")
            if edge.source == edge.target:
                raise InvalidArgumentError(f"transition ({edge.source}, {edge.target}) is a self-loop")
            if not cells[edge.source].contains_box(edge.guard, tol=BOUNDARY_TOLERANCE):
                raise InvalidArgumentError(f"guard of ({edge.source}, {edge.target}) leaves its source cell")
        if self.exterior_policy != EXTERIOR_POLICY:
            raise InvalidArgumentError(f"unsupported exterior policy {self.exterior_policy!r}")

    def to_dict(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "partition": self.partition.to_dict(),
            "input_box": self.input_box.to_dict(),
            "nets": [net.to_dict() for net in self.nets],
            "transitions": [edge.to_dict() for edge in self.transitions],
            "exterior_policy": self.exterior_policy,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HybridAutomaton":
        try:
            if data.get("version") != MODEL_VERSION:
                raise ModelValidationError(f"unsupported model version {data.get('version')!r}")
            return cls(
                partition=Partition.from_dict(data["partition"]),
                nets=tuple(NeuralNet.from_dict(item) for item in data["nets"]),
                transitions=tuple(Transition.from_dict(item) for item in data.get("transitions", [])),
                input_box=Box.from_dict(data["input_box"]),
                meta=data.get("meta", {}),
                exterior_policy=data.get("exterior_policy", EXTERIOR_POLICY),
            )
        except ModelValidationError:
            raise
        except (InvalidArgumentError, KeyError, TypeError, AttributeError) as e:
            raise ModelValidationError(f"invalid model: {e}") from e


def infer_transitions(p: Partition, traces: Sequence[Trace]) -> List[Transition]:
    """Edges (p, q) for every observed step from cell p to cell q != p, guarded by the witness bounding box."""
    sources, _, targets = stack_pairs(traces)
    if sources.shape[0] == 0:
        return []
    source_cells, _ = locate_many(p, sources)
    target_cells, _ = locate_many(p, targets)

    witnesses: Dict[Tuple[int, int], List[np.ndarray]] = defaultdict(list)
    for x, src, dst in zip(sources, source_cells, target_cells):
        if src != dst:
            # exterior witnesses are projected onto their nearest cell
            witnesses[(int(src), int(dst))].append(np.clip(x, p.lows[src], p.highs[src]))

    return [
        Transition(
            source=src,
            target=dst,
            guard=bounding_box([Box.point(x) for x in points]),
            witnesses=len(points),
        )
        for (src, dst), points in sorted(witnesses.items())
    ]


def assemble(
    p: Partition,
    nets: Sequence[NeuralNet],
    traces: Sequence[Trace],
    input_box: Box,
    meta: Optional[Dict] = None,
) -> HybridAutomaton:
    if len(nets) != len(p.cells):
        raise InvalidArgumentError(f"{len(nets)} networks for {len(p.cells)} cells")
    transitions = infer_transitions(p, traces)
    automaton = HybridAutomaton(
        partition=p, nets=tuple(nets), transitions=tuple(transitions), input_box=input_box, meta=dict(meta or {})
    )
    logger.info(
        "[automaton] Hybrid automaton assembled",
        extra={"cells": len(p.cells), "transitions": len(transitions)},
    )
    return automaton


def single_network_automaton(
    net: NeuralNet, domain: Box, input_box: Box, meta: Optional[Dict] = None
) -> HybridAutomaton:
    """A one-cell automaton wrapping a monolithic network."""
    partition = make_partition(domain, [1] * domain.dim)
    return HybridAutomaton(partition=partition, nets=(net,), transitions=(), input_box=input_box, meta=dict(meta or {}))


@dataclass
class StepResult:
    state: np.ndarray
    cell: int
    exterior: bool


def step(h: HybridAutomaton, x, u) -> StepResult:
    x = as_state(x, h.state_dim)
    u = as_state(u, h.input_dim)
    cell, exterior = locate(h.partition, x)
    return StepResult(state=forward(h.nets[cell], np.concatenate([x, u])), cell=cell, exterior=exterior)


@dataclass
class SimResult:
    trajectory: np.ndarray
    cells: List[int]
    exterior_steps: List[int] = field(default_factory=list)


def simulate(h: HybridAutomaton, x0, inputs) -> SimResult:
    """Fold ``step`` over ``inputs``; ``cells[k]`` is the topology of ``trajectory[k]``."""
    x = as_state(x0, h.state_dim)
    inputs = np.asarray(inputs, dtype=np.float64).reshape(-1, h.input_dim)

    trajectory = [x]
    cells = []
    exterior_steps = []
    for k, u in enumerate(inputs):
        result = step(h, x, u)
        cells.append(result.cell)
        if result.exterior:
            exterior_steps.append(k)
        x = result.state
        trajectory.append(x)

    cell, exterior = locate(h.partition, x)
    cells.append(cell)
    if exterior:
        exterior_steps.append(len(inputs))

    if exterior_steps:
        logger.debug("[automaton] Simulation left the domain", extra={"steps": exterior_steps})
    return SimResult(trajectory=np.array(trajectory), cells=cells, exterior_steps=exterior_steps)


@dataclass
class CellError:
    cell: int
    pairs: int
    mse: Optional[float]


@dataclass
class MSEReport:
    mse: float
    pairs: int
    per_cell: List[CellError]

    def to_dict(self) -> dict:
        return {
            "mse": self.mse,
            "pairs": self.pairs,
            "per_cell": [{"cell": item.cell, "pairs": item.pairs, "mse": item.mse} for item in self.per_cell],
        }


def evaluate_mse(h: HybridAutomaton, traces: Sequence[Trace]) -> MSEReport:
    """Mean over all one-step predictions of the squared error norm, with a per-cell breakdown."""
    if not traces:
        raise InvalidArgumentError("evaluate_mse needs at least one test trace")
    sources, inputs, targets = stack_pairs(traces)
    if sources.shape[0] == 0:
        raise InvalidArgumentError("test traces contain no transitions")
    if sources.shape[1] != h.state_dim or inputs.shape[1] != h.state_dim + h.input_dim:
        raise InvalidArgumentError("test traces do not match the automaton dimensions")

    cells, _ = locate_many(h.partition, sources)
    total = 0.0
    per_cell = []
    for q in range(len(h.nets)):
        mask = cells == q
        count = int(mask.sum())
        if count == 0:
            per_cell.append(CellError(cell=q, pairs=0, mse=None))
            continue
        residual = forward(h.nets[q], inputs[mask]) - targets[mask]
        squared = float(np.sum(residual * residual))
        total += squared
        per_cell.append(CellError(cell=q, pairs=count, mse=squared / count))

    return MSEReport(mse=total / sources.shape[0], pairs=int(sources.shape[0]), per_cell=per_cell)
