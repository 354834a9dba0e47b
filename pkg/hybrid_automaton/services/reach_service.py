import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import sentry_sdk

from hybrid_automaton.adapters.svg_plot import render_reach_svg
from hybrid_automaton.automaton import HybridAutomaton
from hybrid_automaton.exceptions import InvalidArgumentError
from hybrid_automaton.geometry import Box
from hybrid_automaton.reach import MonteCarloReport, ReachConfig, ReachSet, monte_carlo_violations, reach
from hybrid_automaton.repositories.reach_repository import ReachRepository

logger = logging.getLogger(__name__)


@dataclass
class ReachOutcome:
    reach_set: ReachSet
    paths: Dict[str, str]
    baseline: Optional[ReachSet] = None
    monte_carlo: Optional[MonteCarloReport] = None
    timings: Dict[str, float] = field(default_factory=dict)


def plot_rows(reach_set: ReachSet, dim: int):
    """(k, i, lo, hi) per fragment; one-dimensional states are drawn against time."""
    rows = []
    for k, fragments in enumerate(reach_set.steps):
        for i, fragment in enumerate(fragments):
            if dim == 1:
                rows.append((k, i, np.array([k, fragment.box.lo[0]]), np.array([k + 1, fragment.box.hi[0]])))
            else:
                rows.append((k, i, fragment.box.lo, fragment.box.hi))
    return rows


def plot_trajectories(trajectories: np.ndarray) -> np.ndarray:
    if trajectories.shape[2] > 1:
        return trajectories
    steps = np.broadcast_to(np.arange(trajectories.shape[1], dtype=np.float64), trajectories.shape[:2])
    return np.stack([steps, trajectories[:, :, 0]], axis=2)


class ReachService:
    def __init__(self, repository: Optional[ReachRepository] = None):
        self.repository = repository or ReachRepository()

    def run(
        self,
        automaton: HybridAutomaton,
        init: Box,
        cfg: ReachConfig,
        out_prefix: str,
        baseline: Optional[HybridAutomaton] = None,
        overlay: int = 0,
        seed: int = 0,
    ) -> ReachOutcome:
        if overlay < 0:
            raise InvalidArgumentError(f"overlay count must be non-negative, got {overlay}")
        try:
            reach_set = reach(automaton, init, cfg)
            monte_carlo = None
            if overlay:
                monte_carlo = monte_carlo_violations(automaton, init, cfg.input_box, reach_set, overlay, seed)

            baseline_set = None
            if baseline is not None:
                baseline_set = reach(baseline, init, cfg)
        except Exception as e:
            sentry_sdk.set_tag("horizon", cfg.horizon)
            sentry_sdk.set_context("reach", {"init": init.to_dict(), "config": cfg.to_dict()})
            sentry_sdk.capture_exception(e)
            logger.error("[ReachService] Error computing reachable set", extra={"error": str(e)}, exc_info=True)
            raise

        outcome = ReachOutcome(reach_set=reach_set, paths={}, baseline=baseline_set, monte_carlo=monte_carlo)
        self._write(outcome, automaton.state_dim, out_prefix)
        outcome.timings = {"reach_seconds": float(sum(reach_set.seconds))}
        if baseline_set is not None:
            outcome.timings.update(self._compare(reach_set, baseline_set))
        return outcome

    def _write(self, outcome: ReachOutcome, dim: int, out_prefix: str) -> None:
        prefix = Path(out_prefix)
        paths = {
            "reach": f"{prefix}.reach.csv",
            "timing": f"{prefix}.timing.csv",
            "volume": f"{prefix}.volume.csv",
            "svg": f"{prefix}.svg",
        }
        self.repository.save_fragments(paths["reach"], outcome.reach_set, dim)
        self.repository.save_timing(paths["timing"], outcome.reach_set)
        self.repository.save_volume(paths["volume"], outcome.reach_set)

        trajectories = None
        if outcome.monte_carlo is not None:
            trajectories = plot_trajectories(outcome.monte_carlo.trajectories)
        render_reach_svg(paths["svg"], plot_rows(outcome.reach_set, dim), trajectories)

        if outcome.baseline is not None:
            paths["compare"] = f"{prefix}.compare.csv"
            self.repository.save_comparison(paths["compare"], outcome.reach_set, outcome.baseline)
        outcome.paths = paths

    def _compare(self, hybrid: ReachSet, baseline: ReachSet) -> Dict[str, float]:
        steps = max(len(hybrid.seconds) - 1, 1)
        hybrid_mean = float(sum(hybrid.seconds[1:]) / steps)
        baseline_mean = float(sum(baseline.seconds[1:]) / steps)
        tighter = sum(1 for k in range(len(hybrid.steps)) if hybrid.hull_volume(k) <= baseline.hull_volume(k))
        logger.info(
            "[ReachService] Baseline comparison",
            extra={
                "hybrid_mean_step_seconds": hybrid_mean,
                "baseline_mean_step_seconds": baseline_mean,
                "hybrid_faster": hybrid_mean < baseline_mean,
                "steps_hybrid_tighter": tighter,
                "steps": len(hybrid.steps),
            },
        )
        if hybrid_mean >= baseline_mean:
            logger.warning("[ReachService] Hybrid reach was not faster per step than the baseline")
        return {"hybrid_mean_step_seconds": hybrid_mean, "baseline_mean_step_seconds": baseline_mean}
