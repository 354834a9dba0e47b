"""
SVG rendering of reachable sets with matplotlib (Agg, no display).

Each fragment becomes one ``Rectangle`` whose SVG group id is
``fragment-<k>-<i>``; overlaid trajectories are ``sim-<j>``. The data to SVG
user-unit affine map is stored as JSON in the document description.
"""

import json
import logging
from typing import List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from hybrid_automaton.adapters.storage import PathLike, atomic_write  # noqa: E402

logger = logging.getLogger(__name__)

SVG_DPI = 72

FragmentRow = Tuple[int, int, np.ndarray, np.ndarray]


def _limits(rows: Sequence[FragmentRow], trajectories: Optional[np.ndarray], dims: Tuple[int, int]):
    points: List[np.ndarray] = []
    for _, _, lo, hi in rows:
        points.append(lo[list(dims)])
        points.append(hi[list(dims)])
    if trajectories is not None and trajectories.size:
        points.extend(trajectories[:, :, list(dims)].reshape(-1, 2))
    if not points:
        return (-1.0, 1.0), (-1.0, 1.0)
    stacked = np.vstack(points)
    lo, hi = stacked.min(axis=0), stacked.max(axis=0)
    pad = np.maximum((hi - lo) * 0.05, 1e-3)
    return (lo[0] - pad[0], hi[0] + pad[0]), (lo[1] - pad[1], hi[1] + pad[1])


def data_to_svg_affine(ax, height: float) -> dict:
    """Coefficients (scale, offset) per axis such that svg = scale * data + offset."""
    origin, unit_x, unit_y = ax.transData.transform([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])
    sx = unit_x[0] - origin[0]
    sy = unit_y[1] - origin[1]
    # SVG y grows downwards
    return {"x": [float(sx), float(origin[0])], "y": [float(-sy), float(height - origin[1])]}


def render_reach_svg(
    path: PathLike,
    rows: Sequence[FragmentRow],
    trajectories: Optional[np.ndarray] = None,
    dims: Tuple[int, int] = (0, 1),
    title: str = "Reachable set",
) -> dict:
    """Write the SVG and return the recorded affine map."""
    fig, ax = plt.subplots(figsize=(8, 6), dpi=SVG_DPI)
    try:
        xlim, ylim = _limits(rows, trajectories, dims)
        ax.set_xlim(*xlim)
        ax.set_ylim(*ylim)
        ax.set_xlabel(f"x{dims[0] + 1}")
        ax.set_ylabel(f"x{dims[1] + 1}")
        ax.set_title(title)

        for k, i, lo, hi in rows:
            xy = (lo[dims[0]], lo[dims[1]])
            width = hi[dims[0]] - lo[dims[0]]
            height = hi[dims[1]] - lo[dims[1]]
            rect = Rectangle(xy, width, height, linewidth=0.5, edgecolor="tab:red", facecolor="none")
            rect.set_gid(f"fragment-{k}-{i}")
            ax.add_patch(rect)

        if trajectories is not None:
            for j, trajectory in enumerate(trajectories):
                (line,) = ax.plot(trajectory[:, dims[0]], trajectory[:, dims[1]], color="tab:blue", linewidth=0.3)
                line.set_gid(f"sim-{j}")

        fig.canvas.draw()
        affine = data_to_svg_affine(ax, fig.get_figheight() * SVG_DPI)
        with atomic_write(path, "wb") as handle:
            fig.savefig(
                handle,
                format="svg",
                dpi=SVG_DPI,
                metadata={"Title": title, "Description": json.dumps({"data_to_svg": affine}), "Date": None},
            )
    finally:
        plt.close(fig)

    logger.info(
        "[svg_plot] Reach plot written",
        extra={
            "path": str(path),
            "fragments": len(rows),
            "trajectories": 0 if trajectories is None else len(trajectories),
        },
    )
    return affine
