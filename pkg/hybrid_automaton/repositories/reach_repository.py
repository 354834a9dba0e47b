"""
CSV outputs of a reach run: fragments, per-step timing, per-step volume and the
baseline comparison.
"""

import csv
import logging
from typing import List, Optional

from hybrid_automaton.adapters.storage import PathLike, atomic_write, float_text
from hybrid_automaton.reach import ReachSet

logger = logging.getLogger(__name__)


def fragment_header(dim: int) -> List[str]:
    return ["k", "cell"] + [f"lo{i + 1}" for i in range(dim)] + [f"hi{i + 1}" for i in range(dim)]


class ReachRepository:
    def save_fragments(self, path: PathLike, reach_set: ReachSet, dim: int) -> int:
        rows = 0
        with atomic_write(path) as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(fragment_header(dim))
            for k, fragments in enumerate(reach_set.steps):
                for fragment in fragments:
                    writer.writerow(
                        [k, fragment.cell]
                        + [float_text(value) for value in fragment.box.lo]
                        + [float_text(value) for value in fragment.box.hi]
                    )
                    rows += 1
        logger.info("[ReachRepository] Fragments saved", extra={"path": str(path), "rows": rows})
        return rows

    def save_timing(self, path: PathLike, reach_set: ReachSet) -> None:
        with atomic_write(path) as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["k", "seconds"])
            for k, seconds in enumerate(reach_set.seconds):
                writer.writerow([k, float_text(seconds)])

    def save_volume(self, path: PathLike, reach_set: ReachSet) -> None:
        with atomic_write(path) as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["k", "fragments", "fragment_volume", "hull_volume"])
            for k, fragments in enumerate(reach_set.steps):
                writer.writerow(
                    [
                        k,
                        len(fragments),
                        float_text(reach_set.fragment_volume(k)),
                        float_text(reach_set.hull_volume(k)),
                    ]
                )

    def save_comparison(self, path: PathLike, hybrid: ReachSet, baseline: ReachSet) -> None:
        with atomic_write(path) as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["k", "seconds", "baseline_seconds", "volume", "baseline_volume"])
            for k in range(len(hybrid.steps)):
                writer.writerow(
                    [
                        k,
                        float_text(hybrid.seconds[k]),
                        float_text(baseline.seconds[k]),
                        float_text(hybrid.hull_volume(k)),
                        float_text(baseline.hull_volume(k)),
                    ]
                )

    def save_trajectories(self, path: PathLike, trajectories, cells: Optional[list] = None) -> int:
        """Trajectory CSV ``sim,k,cell,x1..xn``; ``trajectories`` has shape (count, steps + 1, n)."""
        dim = trajectories.shape[2]
        rows = 0
        with atomic_write(path) as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["sim", "k", "cell"] + [f"x{i + 1}" for i in range(dim)])
            for j, trajectory in enumerate(trajectories):
                for k, state in enumerate(trajectory):
                    cell = "" if cells is None else cells[j][k]
                    writer.writerow([j, k, cell] + [float_text(value) for value in state])
                    rows += 1
        logger.info("[ReachRepository] Trajectories saved", extra={"path": str(path), "rows": rows})
        return rows
