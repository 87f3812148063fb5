"""Static SVG plots of a run.

Figures are built with `matplotlib.figure.Figure` directly rather than
pyplot, so concurrent seed runs never share global figure state.
"""

import logging
from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.figure import Figure

from moproc.kinematics import PositionSequence, Skeleton

logger = logging.getLogger(__name__)

HEIGHT_JOINTS = ("head", "left_hand", "right_hand", "left_toe", "right_toe", "root")


def _save(fig: Figure, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg")
    logger.debug(f"Wrote plot {path}")


def plot_root_path(path: Path, pos: PositionSequence) -> None:
    """Top-down (x, z) trajectory of the root with start and end marked."""
    root = pos.values()[:, 0]
    fig = Figure(figsize=(5, 5))
    ax = fig.add_subplot()
    ax.plot(root[:, 0], root[:, 2], color="tab:blue")
    ax.scatter(root[0, 0], root[0, 2], color="tab:green", label="start", zorder=3)
    ax.scatter(root[-1, 0], root[-1, 2], color="tab:red", label="end", zorder=3)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("z (m)")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title("Root path (top view)")
    ax.legend()
    _save(fig, path)


def plot_joint_heights(
    path: Path, pos: PositionSequence, skeleton: Skeleton, joints: Sequence[str] = HEIGHT_JOINTS
) -> None:
    values = pos.values()
    time = np.arange(values.shape[0]) / pos.fps
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    for name in joints:
        ax.plot(time, values[:, skeleton.joint_index(name), 1], label=name)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("height (m)")
    ax.set_title("Joint heights")
    ax.legend(loc="best", fontsize="small")
    _save(fig, path)


def plot_error_trace(
    path: Path,
    trace: Sequence[float],
    term_labels: Sequence[str] = (),
    term_trace: Sequence[Sequence[float]] = (),
) -> None:
    """Total error per step (log scale) with each term's contribution."""
    steps = np.arange(len(trace))
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    ax.plot(steps, trace, color="black", linewidth=2, label="total")
    if term_trace and len(term_labels) <= 12:
        per_term = np.asarray(term_trace, dtype=float)
        for i, label in enumerate(term_labels):
            ax.plot(steps, per_term[:, i], linewidth=1, alpha=0.7, label=label)
    if np.all(np.asarray(trace) > 0):
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("error")
    ax.set_title("Optimization error")
    ax.legend(loc="best", fontsize="x-small")
    _save(fig, path)
