"""
Set-valued reachability of a hybrid automaton.

Reachable sets are unions of boxes tagged with the cell whose network governs
them. Each step splits the current set by the partition, pushes every fragment
(times the input box) through its cell network with interval arithmetic, and
combines the images into the next set.
"""

import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from hybrid_automaton.automaton import HybridAutomaton, single_network_automaton
from hybrid_automaton.exceptions import (
    FragmentOverflowError,
    HybridAutomatonError,
    InvalidArgumentError,
    ReachStepError,
)
from hybrid_automaton.geometry import Box, Partition, bounding_box, intersect, locate_many
from hybrid_automaton.nn import ACTIVATIONS, NeuralNet, forward

logger = logging.getLogger(__name__)

DEFAULT_MAX_FRAGMENTS = 4096

_EPS = np.finfo(np.float64).eps


class MergePolicy(str, Enum):
    PER_CELL = "per-cell-merge"
    EXACT_UNION = "exact-union"


class ExteriorMode(str, Enum):
    CLIP = "clip"
    EXTEND = "extend"


@dataclass(frozen=True)
class ReachConfig:
    horizon: int
    input_box: Box
    merge_policy: MergePolicy = MergePolicy.PER_CELL
    max_fragments: int = DEFAULT_MAX_FRAGMENTS
    exterior: ExteriorMode = ExteriorMode.EXTEND

    def __post_init__(self):
        if self.horizon < 0:
            raise InvalidArgumentError(f"horizon must be non-negative, got {self.horizon}")
        if self.max_fragments < 1:
            raise InvalidArgumentError(f"max_fragments must be positive, got {self.max_fragments}")
        object.__setattr__(self, "merge_policy", MergePolicy(self.merge_policy))
        object.__setattr__(self, "exterior", ExteriorMode(self.exterior))

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "input_box": self.input_box.to_dict(),
            "merge_policy": self.merge_policy.value,
            "max_fragments": self.max_fragments,
            "exterior": self.exterior.value,
        }


@dataclass(frozen=True, eq=False)
class Fragment:
    cell: int
    box: Box


@dataclass
class SplitResult:
    fragments: List[Fragment]
    escaped_volume: float = 0.0


@dataclass
class ReachSet:
    steps: List[List[Fragment]]
    seconds: List[float] = field(default_factory=list)
    escaped_volume: List[float] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.steps) - 1

    def fragment_volume(self, k: int) -> float:
        return float(sum(fragment.box.volume for fragment in self.steps[k]))

    def hull(self, k: int) -> Optional[Box]:
        if not self.steps[k]:
            return None
        return bounding_box([fragment.box for fragment in self.steps[k]])

    def hull_volume(self, k: int) -> float:
        hull = self.hull(k)
        return hull.volume if hull is not None else 0.0

    def contains(self, k: int, points) -> np.ndarray:
        """Mask of the rows of ``points`` that lie in the union of step-``k`` fragments."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        inside = np.zeros(points.shape[0], dtype=bool)
        for fragment in self.steps[k]:
            inside |= np.all((points >= fragment.box.lo) & (points <= fragment.box.hi), axis=1)
        return inside


def interval_forward(net: NeuralNet, in_box: Box) -> Box:
    """
    Sound output box of ``net`` over ``in_box``.

    Affine layers use the centre/radius form of the sign-split sum
    lo' = sum_j min(w_j lo_j, w_j hi_j) + b, padded outward by a rounding bound on
    rows with nonzero radius. Monotone activations map the endpoints. A
    zero-width box propagates exactly like ``forward``.
    """
    if in_box.dim != net.input_dim:
        raise InvalidArgumentError(f"network expects {net.input_dim} inputs, box has dimension {in_box.dim}")

    lo, hi = in_box.lo, in_box.hi
    for layer in net.layers:
        weights, bias = layer.weights, layer.bias
        center = (lo + hi) / 2.0
        radius = np.maximum(hi - center, center - lo)
        out_center = weights @ center + bias
        out_radius = np.abs(weights) @ radius
        widen = out_radius > 0.0
        if np.any(widen):
            magnitude = np.abs(weights) @ (np.abs(center) + radius) + np.abs(bias)
            slack = 2.0 * (weights.shape[1] + 2) * _EPS * magnitude
            out_radius = np.where(widen, out_radius + slack, out_radius)
        activation = ACTIVATIONS[layer.activation][0]
        lo, hi = activation(out_center - out_radius), activation(out_center + out_radius)
    return Box(lo=lo, hi=hi)


def _as_boxes(boxes: Union[Box, Fragment, Sequence[Union[Box, Fragment]]]) -> List[Box]:
    if isinstance(boxes, (Box, Fragment)):
        boxes = [boxes]
    return [item.box if isinstance(item, Fragment) else item for item in boxes]


def _owned_by_upper_neighbour(lo: np.ndarray, hi: np.ndarray, p: Partition) -> np.ndarray:
    """Rows whose intersection is a slab on an interior upper face, inside the domain."""
    on_face = (lo == hi) & (hi == p.highs) & (p.highs < p.domain.hi)
    # exterior ties go to the lowest cell index in locate, so those stay
    inside = np.all(lo >= p.domain.lo, axis=1) & np.all(hi <= p.domain.hi, axis=1)
    return np.any(on_face, axis=1) & inside


def split(
    boxes: Union[Box, Sequence[Union[Box, Fragment]]],
    p: Partition,
    exterior: ExteriorMode = ExteriorMode.CLIP,
) -> SplitResult:
    """
    Intersect every box with every cell; nonempty (possibly zero-width) intersections become fragments.

    A zero-width slab lying on an interior upper face of a cell belongs to the
    neighbour above, as in ``locate``, and is not kept for the lower cell. A
    point state therefore splits into exactly one fragment in its owning cell.

    ``CLIP`` drops the part of a box outside the domain and reports its volume.
    ``EXTEND`` treats the outer cells as reaching to infinity so exterior mass
    stays with the nearest cell, which is where ``step`` dispatches it.
    """
    exterior = ExteriorMode(exterior)
    if exterior is ExteriorMode.EXTEND:
        lows, highs = p.extended_lows, p.extended_highs
    else:
        lows, highs = p.lows, p.highs

    fragments = []
    escaped = 0.0
    for box in _as_boxes(boxes):
        if box.dim != p.dim:
            raise InvalidArgumentError(f"box dimension {box.dim} does not match partition dimension {p.dim}")
        lo = np.maximum(box.lo, lows)
        hi = np.minimum(box.hi, highs)
        keep = np.all(lo <= hi, axis=1) & ~_owned_by_upper_neighbour(lo, hi, p)
        for q in np.flatnonzero(keep):
            fragments.append(Fragment(cell=int(q), box=Box(lo=lo[q], hi=hi[q])))
        inside = intersect(box, p.domain)
        escaped += box.volume - (inside.volume if inside is not None else 0.0)
    return SplitResult(fragments=fragments, escaped_volume=max(escaped, 0.0))


def combine(fragments: Sequence[Fragment], policy: MergePolicy, max_fragments: int) -> List[Fragment]:
    """Fragments ordered by cell; per-cell-merge keeps one bounding box per cell."""
    ordered = sorted(fragments, key=lambda fragment: fragment.cell)
    if MergePolicy(policy) is MergePolicy.EXACT_UNION:
        if len(ordered) > max_fragments:
            raise FragmentOverflowError(len(ordered), max_fragments)
        return ordered

    by_cell: Dict[int, List[Box]] = defaultdict(list)
    for fragment in ordered:
        by_cell[fragment.cell].append(fragment.box)
    return [Fragment(cell=cell, box=bounding_box(boxes)) for cell, boxes in sorted(by_cell.items())]


def step_reach(
    h: HybridAutomaton, fragments: Sequence[Fragment], u_box: Box, cfg: ReachConfig
) -> Tuple[List[Fragment], float]:
    """One Split-and-Combine step; returns the next fragments and the escaped volume."""
    if not fragments:
        raise InvalidArgumentError("step_reach needs at least one fragment")
    if u_box.dim != h.input_dim:
        raise InvalidArgumentError(f"input box dimension {u_box.dim} does not match automaton input {h.input_dim}")

    images = [interval_forward(h.nets[fragment.cell], fragment.box.product(u_box)) for fragment in fragments]
    result = split(images, h.partition, cfg.exterior)
    return combine(result.fragments, cfg.merge_policy, cfg.max_fragments), result.escaped_volume


def reach(h: HybridAutomaton, init: Box, cfg: ReachConfig) -> ReachSet:
    """
    Split-and-Combine from ``init`` over ``cfg.horizon`` steps.

    Point initial and input boxes replay ``simulate`` state for state, also when
    a state sits on an interior cell face.
    """
    if init.dim != h.state_dim:
        raise InvalidArgumentError(f"initial box dimension {init.dim} does not match state dimension {h.state_dim}")

    started = time.perf_counter()
    initial = split(init, h.partition, cfg.exterior)
    reach_set = ReachSet(
        steps=[initial.fragments],
        seconds=[time.perf_counter() - started],
        escaped_volume=[initial.escaped_volume],
    )

    fragments = initial.fragments
    for k in range(1, cfg.horizon + 1):
        started = time.perf_counter()
        if fragments:
            try:
                fragments, escaped = step_reach(h, fragments, cfg.input_box, cfg)
            except HybridAutomatonError as e:
                logger.error("[reach] Reach step failed", extra={"step": k, "error": str(e)})
                raise ReachStepError(k, e) from e
        else:
            escaped = 0.0
        reach_set.steps.append(fragments)
        reach_set.seconds.append(time.perf_counter() - started)
        reach_set.escaped_volume.append(escaped)
        if escaped > 0.0 and cfg.exterior is ExteriorMode.CLIP:
            logger.warning(
                "[reach] Reachable mass clipped at the domain boundary", extra={"step": k, "volume": escaped}
            )

    logger.info(
        "[reach] Reachable set computed",
        extra={
            "horizon": cfg.horizon,
            "cells": len(h.partition),
            "fragments": len(fragments),
            "seconds": sum(reach_set.seconds),
        },
    )
    return reach_set


def reach_single(
    net: NeuralNet,
    init: Box,
    u_box: Box,
    horizon: int,
    domain: Optional[Box] = None,
    merge_policy: MergePolicy = MergePolicy.PER_CELL,
) -> ReachSet:
    """Reach of a monolithic network, i.e. a one-cell automaton whose cell covers everything."""
    automaton = single_network_automaton(net, domain or init, u_box)
    cfg = ReachConfig(horizon=horizon, input_box=u_box, merge_policy=merge_policy, exterior=ExteriorMode.EXTEND)
    return reach(automaton, init, cfg)


@dataclass
class MonteCarloReport:
    trajectories: np.ndarray
    violations: List[int]

    @property
    def total_violations(self) -> int:
        return int(sum(self.violations))


def simulate_batch(h: HybridAutomaton, states: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """One automaton step for every row of ``states``."""
    cells, _ = locate_many(h.partition, states)
    next_states = np.empty_like(states)
    for q in np.unique(cells):
        mask = cells == q
        next_states[mask] = forward(h.nets[q], np.hstack([states[mask], inputs[mask]]))
    return next_states


def monte_carlo_violations(
    h: HybridAutomaton, init: Box, u_box: Box, reach_set: ReachSet, count: int, seed: int
) -> MonteCarloReport:
    """Simulate ``count`` random executions and count, per step, the states outside the reachable set."""
    rng = np.random.Generator(np.random.PCG64(seed))
    states = init.sample(rng, count)
    trajectories = [states]
    violations = [int(np.sum(~reach_set.contains(0, states)))]
    for k in range(1, reach_set.horizon + 1):
        states = simulate_batch(h, states, u_box.sample(rng, count))
        trajectories.append(states)
        violations.append(int(np.sum(~reach_set.contains(k, states))))

    if any(violations):
        logger.error("[reach] Monte Carlo states escaped the reachable set", extra={"violations": sum(violations)})
    return MonteCarloReport(trajectories=np.stack(trajectories, axis=1), violations=violations)
