"""Gradcheck command: compare program gradients with finite differences."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import typer

from moproc import autodiff as ad
from moproc.app.utils import LOG_LEVEL_HELP, configure_log_level, exit_on_error, parse_params, resolve_task
from moproc.configuration.defaults import DEFAULT_FPS
from moproc.configuration.models import ParamValue
from moproc.errors import DifferentiationError
from moproc.kinematics import MotionSequence, Skeleton, rest_motion
from moproc.tasks import TaskSpec

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-4
ROOT_JITTER = 0.3  # meters
ROTATION_JITTER = 0.4  # radians


def random_motion(
    skeleton: Skeleton, n_frames: int, rng: np.random.Generator, fps: float = DEFAULT_FPS
) -> MotionSequence:
    """A standing pose with independent Gaussian noise on every coordinate."""
    rest = rest_motion(skeleton, n_frames, fps)
    root = np.asarray(rest.root) + rng.normal(scale=ROOT_JITTER, size=(n_frames, 3))
    rot = np.asarray(rest.rot) + rng.normal(scale=ROTATION_JITTER, size=(n_frames, skeleton.n_joints, 3))
    return MotionSequence(root=root, rot=rot, fps=fps)


@dataclass
class GradcheckReport:
    task: str
    motions: int
    coordinates: int
    max_rel_error: float


def cmd_gradcheck(
    task: TaskSpec,
    motions: int = 5,
    seed: int = 0,
    coords: int | None = 64,
    frames: int | None = None,
    params: dict[str, ParamValue] | None = None,
) -> GradcheckReport:
    """Largest relative gradient error of `task`'s program over random motions.

    Args:
        task: Task whose program is checked
        motions: Number of random motions
        seed: Seed of the motion and coordinate generator
        coords: Coordinates checked per motion; None checks all of them
        frames: Motion length (default: the task's)
        params: Parameter overrides
    """
    program = task.program
    skeleton = program.skeleton
    bound = program.bind({**task.default_params, **(params or {})})
    n_frames = frames or task.frames
    rng = np.random.default_rng(seed)

    def error(flat):
        motion = MotionSequence.from_flat(flat, skeleton.n_joints, DEFAULT_FPS)
        return program.evaluate(motion, bound).total

    worst = 0.0
    checked = 0
    for i in range(motions):
        x0 = np.asarray(random_motion(skeleton, n_frames, rng).flatten(), dtype=float)
        chosen = None
        if coords is not None and coords < x0.size:
            chosen = sorted(rng.choice(x0.size, size=coords, replace=False).tolist())
        rel = ad.check_gradient(error, x0, coords=chosen)
        logger.debug(f"{task.id}: motion {i} max relative error {rel:.3e}")
        worst = max(worst, rel)
        checked += x0.size if chosen is None else len(chosen)
    return GradcheckReport(task.id, motions, checked, worst)


def gradcheck(
    program: Optional[Path] = typer.Argument(None, help="Path to a .mopro program"),
    task: Optional[str] = typer.Option(None, "--task", "-t", help="Corpus task id"),
    motions: int = typer.Option(5, "--motions", min=1, help="Random motions to check at"),
    seed: int = typer.Option(0, "--seed", help="Random seed"),
    coords: int = typer.Option(64, "--coords", min=0, help="Coordinates checked per motion (0 = all)"),
    frames: Optional[int] = typer.Option(None, "--frames", min=2, help="Motion length (default: the task's)"),
    tolerance: float = typer.Option(DEFAULT_TOLERANCE, "--tolerance", help="Largest accepted relative error"),
    param: Optional[list[str]] = typer.Option(None, "--param", help="Override a parameter: name=value"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help=LOG_LEVEL_HELP),
) -> None:
    """Check a program's reverse-mode gradients against central differences."""
    configure_log_level(log_level)
    with exit_on_error():
        spec = resolve_task(task, program)
        report = cmd_gradcheck(spec, motions, seed, coords or None, frames, parse_params(param))
        typer.echo(
            f"{report.task}: max relative error {report.max_rel_error:.3e} "
            f"({report.coordinates} coordinates over {report.motions} motions)"
        )
        if not report.max_rel_error < tolerance:
            raise DifferentiationError(
                f"gradient check failed: {report.max_rel_error:.3e} exceeds tolerance {tolerance:g}"
            )
