"""
Hyper-rectangle arithmetic and the uniform-grid partition of the state domain.

Boxes are closed and immutable. Cells of a partition are enumerated in
row-major order with dimension 1 varying fastest. Points on a shared cell face
belong to the cell of higher coordinate, except on the domain's upper face.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from hybrid_automaton.exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)

BOUNDARY_TOLERANCE = 1e-12


def _frozen_vector(values, name: str) -> np.ndarray:
    vector = np.array(values, dtype=np.float64).reshape(-1)
    vector.setflags(write=False)
    if vector.size == 0:
        raise InvalidArgumentError(f"{name} must have at least one dimension")
    return vector


def as_state(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to a float vector of length ``dim``."""
    vector = np.asarray(x, dtype=np.float64).reshape(-1)
    if vector.shape[0] != dim:
        raise InvalidArgumentError(f"expected a vector of dimension {dim}, got {vector.shape[0]}")
    return vector


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _frozen_vector(self.lo, "lo")
        hi = _frozen_vector(self.hi, "hi")
        if lo.shape != hi.shape:
            raise InvalidArgumentError(f"lo and hi dimensions differ ({lo.shape[0]} != {hi.shape[0]})")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidArgumentError("box bounds must be finite")
        if np.any(lo > hi):
            raise InvalidArgumentError(f"box has lo > hi: lo={lo.tolist()} hi={hi.tolist()}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_bounds(cls, bounds: Iterable[Tuple[float, float]]) -> "Box":
        pairs = [tuple(pair) for pair in bounds]
        if any(len(pair) != 2 for pair in pairs):
            raise InvalidArgumentError("every dimension needs exactly a (lo, hi) pair")
        return cls(lo=[pair[0] for pair in pairs], hi=[pair[1] for pair in pairs])

    @classmethod
    def point(cls, x) -> "Box":
        return cls(lo=x, hi=x)

    @classmethod
    def from_dict(cls, data: dict) -> "Box":
        try:
            return cls(lo=data["lo"], hi=data["hi"])
        except (KeyError, TypeError) as e:
            raise InvalidArgumentError(f"malformed box: {data!r}") from e

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return (self.lo + self.hi) / 2.0

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def is_degenerate(self) -> bool:
        return bool(np.any(self.lo == self.hi))

    def bounds(self) -> List[Tuple[float, float]]:
        return [(float(lo), float(hi)) for lo, hi in zip(self.lo, self.hi)]

    def contains(self, x, tol: float = 0.0) -> bool:
        x = as_state(x, self.dim)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def contains_box(self, other: "Box", tol: float = 0.0) -> bool:
        _check_same_dim(self, other)
        return bool(np.all(other.lo >= self.lo - tol) and np.all(other.hi <= self.hi + tol))

    def product(self, other: "Box") -> "Box":
        """Cartesian product, e.g. a state box times an input box."""
        return Box(lo=np.concatenate([self.lo, other.lo]), hi=np.concatenate([self.hi, other.hi]))

    def sample(self, rng: np.random.Generator, count: Optional[int] = None) -> np.ndarray:
        size = self.dim if count is None else (count, self.dim)
        return rng.uniform(self.lo, self.hi, size=size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Box):
            return NotImplemented
        return bool(np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi))

    __hash__ = None

    def __repr__(self) -> str:
        return "Box(" + " x ".join(f"[{lo:g}, {hi:g}]" for lo, hi in zip(self.lo, self.hi)) + ")"


def _check_same_dim(a: Box, b: Box) -> None:
    if a.dim != b.dim:
        raise InvalidArgumentError(f"box dimensions differ ({a.dim} != {b.dim})")


def intersect(a: Box, b: Box) -> Optional[Box]:
    """Componentwise [max(lo), min(hi)]; ``None`` when the boxes do not meet."""
    _check_same_dim(a, b)
    lo = np.maximum(a.lo, b.lo)
    hi = np.minimum(a.hi, b.hi)
    if np.any(lo > hi):
        return None
    return Box(lo=lo, hi=hi)


def bounding_box(boxes: Sequence[Box]) -> Box:
    boxes = list(boxes)
    if not boxes:
        raise InvalidArgumentError("bounding_box needs at least one box")
    dim = boxes[0].dim
    if any(box.dim != dim for box in boxes):
        raise InvalidArgumentError("bounding_box needs boxes of equal dimension")
    return Box(lo=np.min([box.lo for box in boxes], axis=0), hi=np.max([box.hi for box in boxes], axis=0))


class Location(NamedTuple):
    cell: int
    exterior: bool


@dataclass(frozen=True, eq=False)
class Partition:
    """Uniform grid over ``domain`` with ``segments[i]`` intervals along dimension i."""

    domain: Box
    segments: Tuple[int, ...]
    cuts: Tuple[np.ndarray, ...] = field(init=False, repr=False)
    lows: np.ndarray = field(init=False, repr=False)
    highs: np.ndarray = field(init=False, repr=False)
    cells: Tuple[Box, ...] = field(init=False, repr=False)

    def __post_init__(self):
        segments = tuple(int(count) for count in self.segments)
        if len(segments) != self.domain.dim:
            raise InvalidArgumentError(
                f"segments has {len(segments)} entries for a {self.domain.dim}-dimensional domain"
            )
        if any(count < 1 for count in segments):
            raise InvalidArgumentError(f"segment counts must be positive, got {list(segments)}")

        cuts = []
        for lo, hi, count in zip(self.domain.lo, self.domain.hi, segments):
            points = lo + np.arange(count + 1, dtype=np.float64) * ((hi - lo) / count)
            points[-1] = hi
            points.setflags(write=False)
            cuts.append(points)

        total = int(np.prod(segments))
        grid = np.array(np.unravel_index(np.arange(total), segments, order="F")).T.reshape(total, len(segments))
        lows = np.array([[cuts[i][m[i]] for i in range(len(segments))] for m in grid])
        highs = np.array([[cuts[i][m[i] + 1] for i in range(len(segments))] for m in grid])
        lows.setflags(write=False)
        highs.setflags(write=False)

        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "cuts", tuple(cuts))
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)
        object.__setattr__(self, "cells", tuple(Box(lo=lo, hi=hi) for lo, hi in zip(lows, highs)))

    @property
    def dim(self) -> int:
        return self.domain.dim

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def extended_lows(self) -> np.ndarray:
        """Cell lower bounds with the outermost faces pushed to -inf."""
        lows = self.lows.copy()
        lows[lows == self.domain.lo] = -np.inf
        return lows

    @property
    def extended_highs(self) -> np.ndarray:
        highs = self.highs.copy()
        highs[highs == self.domain.hi] = np.inf
        return highs

    def to_dict(self) -> dict:
        return {"domain": self.domain.to_dict(), "segments": list(self.segments)}

    @classmethod
    def from_dict(cls, data: dict) -> "Partition":
        try:
            return make_partition(Box.from_dict(data["domain"]), data["segments"])
        except (KeyError, TypeError) as e:
            raise InvalidArgumentError(f"malformed partition: {data!r}") from e


def make_partition(domain: Box, segments: Sequence[int]) -> Partition:
    segments = list(segments)
    if any(int(count) != count for count in segments):
        raise InvalidArgumentError(f"segment counts must be integers, got {segments}")
    partition = Partition(domain=domain, segments=tuple(int(count) for count in segments))
    logger.debug(
        "[geometry] Partition built",
        extra={"segments": list(partition.segments), "cells": len(partition)},
    )
    return partition


def _interior_index(p: Partition, x: np.ndarray) -> int:
    index = []
    for i, cuts in enumerate(p.cuts):
        m = int(np.searchsorted(cuts, x[i], side="right")) - 1
        index.append(min(max(m, 0), p.segments[i] - 1))
    return int(np.ravel_multi_index(index, p.segments, order="F"))


def locate(p: Partition, x) -> Location:
    """Cell holding ``x``; exterior points go to the nearest cell (lowest index on ties)."""
    x = as_state(x, p.dim)
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError(f"cannot locate non-finite state {x.tolist()}")
    if p.domain.contains(x):
        return Location(_interior_index(p, x), False)
    gap = np.maximum(np.maximum(p.lows - x, x - p.highs), 0.0)
    distance = np.sqrt(np.sum(gap * gap, axis=1))
    return Location(int(np.argmin(distance)), True)


def locate_many(p: Partition, points) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised ``locate`` over the rows of ``points``; returns (cells, exterior mask)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != p.dim:
        raise InvalidArgumentError(f"expected an (n, {p.dim}) array of states, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise InvalidArgumentError("cannot locate non-finite states")

    inside = np.all((points >= p.domain.lo) & (points <= p.domain.hi), axis=1)
    cells = np.empty(points.shape[0], dtype=np.int64)

    if np.any(inside):
        index = []
        for i, cuts in enumerate(p.cuts):
            m = np.searchsorted(cuts, points[inside, i], side="right") - 1
            index.append(np.clip(m, 0, p.segments[i] - 1))
        cells[inside] = np.ravel_multi_index(tuple(index), p.segments, order="F")

    exterior = ~inside
    if np.any(exterior):
        outside = points[exterior][:, None, :]
        gap = np.maximum(np.maximum(p.lows[None] - outside, outside - p.highs[None]), 0.0)
        distance = np.sqrt(np.sum(gap * gap, axis=2))
        cells[exterior] = np.argmin(distance, axis=1)

    return cells, exterior
