"""Motion-quality metrics and per-task constraint errors.

Quality metrics work on joint positions (N, J, 3) in meters, y up:

- foot skate: fraction of frame transitions in which any foot is near the
  ground and sliding horizontally
- max acceleration: largest second-difference magnitude over joints/frames
- bone length: fraction of frames whose measured bone length leaves the
  template length +/- a tolerance

Constraint errors come from the formulas in `CONSTRAINT_FORMULAS`, each a
plain-numpy mean absolute error in meters. A formula reads the task's bound
parameters by name (`normal`/`offset` for a plane, `A`/`B` for endpoints,
...), so corpus programs and formulas agree on parameter names.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from moproc.atoms import FrameSet, SupportRegion, center_of_mass, resolve_frames, support_distance
from moproc.configuration.defaults import (
    BONE_LENGTH_TOLERANCE,
    DEFAULT_BONE,
    FOOT_HEIGHT_THRESHOLD,
    FOOT_SPEED_THRESHOLD,
    SUCCESS_THRESHOLD,
)
from moproc.configuration.models import MetricsReport, TaskMetadata
from moproc.kinematics import MotionSequence, PositionSequence, Skeleton, forward_kinematics

if TYPE_CHECKING:
    from moproc.tasks import TaskSpec

logger = logging.getLogger(__name__)

REPORT_COLUMNS = {
    "Sample": "sample",
    "Foot Skate": "foot_skate_ratio",
    "Max Acc.": "max_acceleration",
    "C.Err": "constraint_error",
    "Success": "success",
    "Bone Incorrect": "bone_length_incorrect_ratio",
}


def _positions(pos: PositionSequence | np.ndarray) -> np.ndarray:
    values = pos.values() if isinstance(pos, PositionSequence) else np.asarray(pos, dtype=float)
    if values.ndim != 3 or values.shape[-1] != 3:
        raise ValueError(f"expected positions of shape (N, J, 3), got {values.shape}")
    return values


def foot_skate_ratio(
    pos: PositionSequence | np.ndarray,
    foot_joints: Sequence[int],
    fps: float,
    h_thresh: float = FOOT_HEIGHT_THRESHOLD,
    v_thresh: float = FOOT_SPEED_THRESHOLD,
) -> float:
    """Fraction of frame transitions where any foot skates.

    Transition t (t = 0..N-2) skates when some foot is lower than `h_thresh`
    at frame t and its horizontal speed from t to t+1 exceeds `v_thresh`.

    Raises:
        ValueError: If no foot joints are given, thresholds are not positive
            or the motion has fewer than two frames
    """
    if len(foot_joints) == 0:
        raise ValueError("foot skate needs at least one foot joint")
    if h_thresh <= 0 or v_thresh <= 0 or fps <= 0:
        raise ValueError("foot skate thresholds and fps must be positive")
    p = _positions(pos)
    if p.shape[0] < 2:
        raise ValueError("foot skate needs at least two frames")
    feet = p[:, list(foot_joints)]
    low = feet[:-1, :, 1] < h_thresh
    speed = np.linalg.norm(feet[1:][..., [0, 2]] - feet[:-1][..., [0, 2]], axis=-1) * fps
    skating = np.any(low & (speed > v_thresh), axis=1)
    return float(np.count_nonzero(skating)) / len(skating)


def max_acceleration(pos: PositionSequence | np.ndarray, fps: float) -> float:
    """Largest joint acceleration magnitude in m/s^2 (second differences).

    Raises:
        ValueError: If the motion has fewer than three frames
    """
    p = _positions(pos)
    if p.shape[0] < 3:
        raise ValueError("max acceleration needs at least three frames")
    second = p[2:] - 2.0 * p[1:-1] + p[:-2]
    return float(np.max(np.linalg.norm(second, axis=-1)) * fps**2)


def _bone_child(skeleton: Skeleton, bone: str | int) -> int:
    child = bone if isinstance(bone, int) else skeleton.joint_index(bone)
    if skeleton.parents[child] is None:
        raise ValueError("the root joint has no bone")
    return child


def bone_length_incorrect_ratio(
    pos: PositionSequence | np.ndarray,
    skeleton: Skeleton,
    tolerance: float = BONE_LENGTH_TOLERANCE,
    bone: str | int = DEFAULT_BONE,
    frames: Sequence[int] | None = None,
) -> float:
    """Fraction of frames whose `bone` length is outside template +/- tolerance.

    Bones are named by their child joint; the default is the neck bone
    running from the neck base (12) to the head (15). `frames` restricts
    both the count and the denominator to those indices, e.g. the keyframes
    a constraint is imposed at; by default every frame counts.

    Raises:
        ValueError: If `frames` is empty or out of range, or `bone` is the root
    """
    p = _positions(pos)
    if frames is not None:
        index = np.asarray(frames, dtype=int)
        if index.size == 0:
            raise ValueError("bone length ratio needs at least one frame")
        if index.min() < -len(p) or index.max() >= len(p):
            raise ValueError(f"frame index out of range for {len(p)} frames")
        p = p[index]
    child = _bone_child(skeleton, bone)
    parent = skeleton.parents[child]
    template = float(np.linalg.norm(skeleton.offsets[child]))
    measured = np.linalg.norm(p[:, child] - p[:, parent], axis=-1)
    outside = (measured < template - tolerance) | (measured > template + tolerance)
    return float(np.count_nonzero(outside)) / len(outside)


def unsuccess_rate(
    samples: Iterable[MetricsReport | float], threshold: float = SUCCESS_THRESHOLD
) -> float:
    """Fraction of samples whose constraint error exceeds `threshold` meters."""
    errors = [s.constraint_error if isinstance(s, MetricsReport) else float(s) for s in samples]
    if not errors:
        raise ValueError("unsuccess rate needs at least one sample")
    return sum(e > threshold for e in errors) / len(errors)


# -- constraint-error formulas -------------------------------------------------


@dataclass(frozen=True)
class FormulaContext:
    pos: np.ndarray
    params: Mapping[str, np.ndarray]
    skeleton: Skeleton
    fps: float
    metadata: TaskMetadata

    @property
    def n_frames(self) -> int:
        return self.pos.shape[0]

    def joint(self, name: str) -> np.ndarray:
        return self.pos[:, self.skeleton.joint_index(name)]

    def keyframes(self) -> np.ndarray:
        return resolve_frames(FrameSet(("first", "mid", "last")), self.n_frames)

    def param(self, name: str) -> np.ndarray:
        try:
            return np.asarray(self.params[name], dtype=float)
        except KeyError:
            raise ValueError(f"constraint error formula needs parameter '{name}'") from None


Formula = Callable[[FormulaContext], float]

CONSTRAINT_FORMULAS: dict[str, Formula] = {}


def formula(name: str) -> Callable[[Formula], Formula]:
    def register(fn: Formula) -> Formula:
        CONSTRAINT_FORMULAS[name] = fn
        return fn

    return register


def _above(x: np.ndarray, bound: float) -> np.ndarray:
    return np.maximum(x - bound, 0.0)


def _below(x: np.ndarray, bound: float) -> np.ndarray:
    return np.maximum(bound - x, 0.0)


def _unit(v: np.ndarray) -> np.ndarray:
    length = np.linalg.norm(v)
    if length == 0:
        raise ValueError("direction parameter has zero length")
    return v / length


@formula("keyframe_height")
def _keyframe_height(ctx: FormulaContext) -> float:
    head = ctx.joint("head")[:, 1]
    first, mid, last = ctx.keyframes()
    errors = [
        abs(head[first] - ctx.param("first_height")),
        abs(head[mid] - ctx.param("mid_height")),
        abs(head[last] - ctx.param("last_height")),
    ]
    return float(np.mean(errors))


@formula("overhead_keyframe")
def _overhead_keyframe(ctx: FormulaContext) -> float:
    head = ctx.joint("head")[:, 1]
    first, mid, last = ctx.keyframes()
    low, high = ctx.param("low"), ctx.param("high")
    errors = [_below(head[first], high), _above(head[mid], low), _below(head[last], high)]
    return float(np.mean(errors))


@formula("square")
def _square(ctx: FormulaContext) -> float:
    size = ctx.param("half_size")
    xz = ctx.pos[..., [0, 2]]
    violation = _above(xz, size) + _below(xz, -size)
    return float(violation.sum() / (4 * ctx.n_frames * ctx.pos.shape[1]))


@formula("overhead_band")
def _overhead_band(ctx: FormulaContext) -> float:
    head = ctx.joint("head")
    in_band = (head[:, 2] > ctx.param("band_start")) & (head[:, 2] < ctx.param("band_end"))
    band = np.where(in_band, _above(head[:, 1], ctx.param("barrier_height")), 0.0)
    root_z = ctx.joint("root")[:, 2]
    errors = [band.mean(), _above(root_z[0], ctx.param("start_z")), _below(root_z[-1], ctx.param("end_z"))]
    return float(np.mean(errors))


@formula("gap")
def _gap(ctx: FormulaContext) -> float:
    width = ctx.param("half_width")
    x = ctx.pos[..., 0]
    violation = _above(x, width) + _below(x, -width)
    return float(violation.sum() / (2 * ctx.n_frames * ctx.pos.shape[1]))


@formula("plane")
def _plane(ctx: FormulaContext) -> float:
    normal = _unit(ctx.param("normal"))
    hand = ctx.joint("left_hand")
    return float(np.mean(np.abs(hand @ normal - ctx.param("offset"))))


@formula("line")
def _line(ctx: FormulaContext) -> float:
    origin = ctx.param("origin")
    direction = _unit(ctx.param("direction"))
    feet = ctx.pos[:, list(ctx.skeleton.foot_joints)] - origin
    along = (feet @ direction)[..., None] * direction
    return float(np.mean(np.linalg.norm(feet - along, axis=-1)))


@formula("endpoints")
def _endpoints(ctx: FormulaContext) -> float:
    hand = ctx.joint("left_hand")
    errors = [np.linalg.norm(hand[0] - ctx.param("A")), np.linalg.norm(hand[-1] - ctx.param("B"))]
    return float(np.mean(errors))


@formula("ball")
def _ball(ctx: FormulaContext) -> float:
    diameter = ctx.param("diameter")
    left, right = ctx.joint("left_hand"), ctx.joint("right_hand")
    grip = np.abs(np.linalg.norm(left - right, axis=-1) - diameter)
    held = (left + right) / 2.0
    reach = diameter / 2.0 + ctx.param("chest_thickness")
    hug = np.abs(np.linalg.norm(held - ctx.joint("chest"), axis=-1) - reach)
    return float(np.mean((grip + hug) / 2.0))


@formula("contact")
def _contact(ctx: FormulaContext) -> float:
    gap = np.linalg.norm(ctx.joint("left_hand") - ctx.joint("head"), axis=-1)
    return float(np.mean(_above(gap, ctx.param("reach"))))


@formula("velocity")
def _velocity(ctx: FormulaContext) -> float:
    root = ctx.joint("root")
    velocity = np.diff(root, axis=0) * ctx.fps
    velocity = np.concatenate([velocity, velocity[-1:]], axis=0)
    errors = np.linalg.norm(velocity[ctx.keyframes()] - ctx.param("velocity"), axis=-1)
    return float(np.mean(errors))


@formula("com")
def _com(ctx: FormulaContext) -> float:
    names = ctx.metadata.support or [ctx.skeleton.names[j] for j in ctx.skeleton.foot_joints]
    stance = [ctx.skeleton.joint_index(name) for name in names]
    com = center_of_mass(ctx.skeleton, ctx.pos)
    region = SupportRegion(ctx.pos[:, stance])
    return float(np.mean(support_distance(com[:, [0, 2]], region)))


@formula("lifted_foot")
def _lifted_foot(ctx: FormulaContext) -> float:
    lifted = _below(ctx.joint("left_toe")[:, 1], ctx.param("lift_height"))
    planted = _above(ctx.joint("right_toe")[:, 1], ctx.param("ground_height"))
    return float(np.mean((lifted + planted) / 2.0))


# -- reports -------------------------------------------------------------------


def _as_positions(task: TaskSpec, motion: MotionSequence | PositionSequence) -> PositionSequence:
    if isinstance(motion, PositionSequence):
        return motion
    return forward_kinematics(task.program.skeleton, motion.detached())


def constraint_error(
    task: TaskSpec,
    motion: MotionSequence | PositionSequence,
    params: Mapping[str, Any] | None = None,
) -> float:
    """The task's constraint error in meters (mean over its formulas).

    Tasks without formulas, such as ad-hoc programs, fall back to the
    program's own error under `params`.
    """
    pos = _as_positions(task, motion)
    bound = task.program.bind({**task.default_params, **(params or {})})
    if not task.formulas:
        return task.program.evaluate(pos, bound).value
    ctx = FormulaContext(pos.values(), bound, task.program.skeleton, pos.fps, task.metadata)
    return float(np.mean([CONSTRAINT_FORMULAS[name](ctx) for name in task.formulas]))


def evaluate_motion(
    task: TaskSpec,
    motion: MotionSequence | PositionSequence,
    params: Mapping[str, Any] | None = None,
    *,
    sample: str = "",
    threshold: float = SUCCESS_THRESHOLD,
) -> MetricsReport:
    """Every metric of one sample against `task`."""
    pos = _as_positions(task, motion)
    skeleton = task.program.skeleton
    c_err = constraint_error(task, pos, params)
    report = MetricsReport(
        sample=sample,
        foot_skate_ratio=foot_skate_ratio(pos, skeleton.foot_joints, pos.fps),
        max_acceleration=max_acceleration(pos, pos.fps),
        constraint_error=c_err,
        success=c_err <= threshold,
        bone_length_incorrect_ratio=bone_length_incorrect_ratio(pos, skeleton),
    )
    logger.debug(f"Metrics for {sample or task.id}: {report.model_dump()}")
    return report


def write_report_json(path: Path, reports: MetricsReport | Sequence[MetricsReport]) -> None:
    """One report as an object, several as a list."""
    if isinstance(reports, MetricsReport):
        Path(path).write_text(reports.model_dump_json(indent=2))
        return
    Path(path).write_text(json.dumps([r.model_dump() for r in reports], indent=2))


def write_report_csv(path: Path, reports: Sequence[MetricsReport]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(REPORT_COLUMNS))
        writer.writeheader()
        for report in reports:
            row = report.model_dump()
            writer.writerow({column: row[field] for column, field in REPORT_COLUMNS.items()})
