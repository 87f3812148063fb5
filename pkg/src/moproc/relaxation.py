"""Constraint relaxation: refit constraint geometry to the motion, then map back.

Every shipped geometric constraint is invariant under a yaw about the
vertical axis plus a horizontal translation. Instead of dragging the whole
motion toward a fixed plane, line or pair of endpoints, a relaxed run
periodically refits that geometry to the current motion and keeps
minimizing against the fitted copy. After the last step the motion is moved
rigidly so the fitted geometry lands on the original one, and the result is
scored against the original parameters.
"""

from __future__ import annotations

import logging
from typing import Any, Mapping

import numpy as np

from moproc.configuration.models import RELAX_ALIASES, OptimConfig, RelaxSpec
from moproc.dsl.compiler import ErrorProgram
from moproc.errors import UserError
from moproc.kinematics import (
    MotionSequence,
    forward_kinematics,
    heading_angle,
    yaw_matrix,
    yaw_translate,
)
from moproc.optimizer import OptimResult, Progress, Scorer, restart_search
from moproc.priors import MotionPrior

logger = logging.getLogger(__name__)

# spread (m^2) below which a point cloud counts as a single point
DEGENERATE_SPREAD = 1e-12

_PARAM_KINDS = {
    "plane_fit": ("vec3", "float"),
    "line_fit": ("vec3", "vec3"),
    "endpoint_pair": ("vec3", "vec3"),
}


def _horizontal(v: np.ndarray) -> np.ndarray:
    return np.array([v[0], 0.0, v[2]], dtype=float)


def _principal_axes(points_xz: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
    """Centroid, major axis and minor axis of 2D points; None if they coincide."""
    centroid = points_xz.mean(axis=0)
    centered = points_xz - centroid
    covariance = centered.T @ centered / len(points_xz)
    if np.trace(covariance) < DEGENERATE_SPREAD:
        return None
    _, vectors = np.linalg.eigh(covariance)
    return centroid, vectors[:, 1], vectors[:, 0]


def fit_vertical_plane(
    points: np.ndarray, reference_normal: np.ndarray
) -> tuple[np.ndarray, float] | None:
    """Least-squares vertical plane through `points`.

    The normal lies in the xz-plane and points the same way as the
    horizontal part of `reference_normal`. Returns (unit normal, offset)
    with the plane n . p = offset, or None when the points coincide.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    axes = _principal_axes(points[:, [0, 2]])
    if axes is None:
        return None
    centroid, _, minor = axes
    normal = np.array([minor[0], 0.0, minor[1]])
    if normal @ _horizontal(np.asarray(reference_normal, dtype=float)) < 0:
        normal = -normal
    return normal, float(normal[[0, 2]] @ centroid)


def fit_horizontal_line(
    points: np.ndarray, reference_origin: np.ndarray, reference_direction: np.ndarray
) -> tuple[np.ndarray, np.ndarray] | None:
    """Least-squares horizontal line through `points`.

    The line keeps the height of `reference_origin` and its direction is
    oriented like `reference_direction`. Returns (origin, unit direction)
    or None when the points coincide.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    axes = _principal_axes(points[:, [0, 2]])
    if axes is None:
        return None
    centroid, major, _ = axes
    direction = np.array([major[0], 0.0, major[1]])
    if direction @ _horizontal(np.asarray(reference_direction, dtype=float)) < 0:
        direction = -direction
    origin = np.array([centroid[0], float(reference_origin[1]), centroid[1]])
    return origin, direction


def relax_endpoints(
    a_hat: np.ndarray, b_hat: np.ndarray, a: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray] | None:
    """Endpoints with the original separation, centered on the current ones.

    Works in the horizontal plane: the relaxed pair keeps the midpoint and
    heading of (a_hat, b_hat) and the length |a - b|; heights come from
    `a` and `b`. Returns None when a_hat and b_hat coincide horizontally.
    """
    a_hat, b_hat = _horizontal(np.asarray(a_hat, float)), _horizontal(np.asarray(b_hat, float))
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    mid = (a_hat + b_hat) / 2.0
    half = a_hat - mid
    length = np.linalg.norm(half)
    if length**2 < DEGENERATE_SPREAD:
        return None
    reach = np.linalg.norm(a - b) / 2.0
    a_relaxed = mid + half / length * reach
    b_relaxed = mid - half / length * reach
    a_relaxed[1], b_relaxed[1] = a[1], b[1]
    return a_relaxed, b_relaxed


def _pivoted(point: np.ndarray, pivot: np.ndarray, dyaw: float) -> np.ndarray:
    return (np.asarray(point, dtype=float) - pivot) @ yaw_matrix(dyaw).T + pivot


class Relaxation:
    """Refits the parameters named by a `RelaxSpec` during one program's runs.

    Stateless between runs: `refit` returns a new parameter mapping, so a
    single instance can serve concurrent restarts.
    """

    def __init__(self, spec: RelaxSpec, program: ErrorProgram, params: Mapping[str, Any] | None = None):
        if not spec.enabled:
            raise ValueError("relaxation needs a variant other than 'none'")
        self.spec = spec
        self.program = program
        self.skeleton = program.skeleton
        try:
            self.joints = [self.skeleton.joint_index(name) for name in spec.joints]
        except KeyError as e:
            raise UserError(f"Relaxation refers to unknown joint {e}") from None
        for name, kind in zip(spec.params, _PARAM_KINDS[spec.variant]):
            try:
                declared = program.param(name).kind
            except KeyError:
                raise UserError(
                    f"Relaxation '{spec.variant}' needs parameter '{name}', "
                    f"which task '{program.name}' does not declare"
                ) from None
            if declared != kind:
                raise UserError(f"Relaxation parameter '{name}' must be a {kind}, not a {declared}")
        self.original = program.bind(params)

    def _trajectories(self, motion: MotionSequence) -> np.ndarray:
        pos = forward_kinematics(self.skeleton, motion.detached()).values()
        return pos[:, self.joints]

    def refit(self, motion: MotionSequence, params: Mapping[str, Any], step: int = 0) -> dict[str, Any]:
        """New parameters fitted to `motion`; degenerate fits keep `params`."""
        first, second = self.spec.params
        current = {k: np.asarray(v, dtype=float) for k, v in params.items()}
        traj = self._trajectories(motion)

        if self.spec.variant == "plane_fit":
            fit = fit_vertical_plane(traj, current[first])
        elif self.spec.variant == "line_fit":
            fit = fit_horizontal_line(traj, current[first], current[second])
        else:
            fit = relax_endpoints(
                traj[0, 0], traj[-1, 0], self.original[first], self.original[second]
            )

        if fit is None:
            logger.warning(f"Degenerate {self.spec.variant} at step {step}; keeping previous parameters")
            return dict(params)
        updated = dict(params)
        updated[first] = np.asarray(fit[0], dtype=float)
        updated[second] = np.asarray(fit[1], dtype=float)
        logger.debug(f"Refit {self.spec.variant} at step {step}: {first}={fit[0]}, {second}={fit[1]}")
        return updated

    def transform(
        self, relaxed: Mapping[str, Any], original: Mapping[str, Any], pivot: np.ndarray
    ) -> tuple[float, float, float]:
        """(dx, dz, dyaw) of the rigid map taking the relaxed geometry onto the original.

        The yaw turns about the vertical axis through `pivot`, matching
        `yaw_translate`.
        """
        first, second = self.spec.params
        r1, r2 = np.asarray(relaxed[first], float), np.asarray(relaxed[second], float)
        o1, o2 = np.asarray(original[first], float), np.asarray(original[second], float)
        pivot = np.asarray(pivot, dtype=float)

        if self.spec.variant == "plane_fit":
            normal_r = r1 / np.linalg.norm(r1)
            normal_o = o1 / np.linalg.norm(o1)
            dyaw = heading_angle(normal_r, normal_o)
            on_plane = _pivoted(normal_r * float(r2), pivot, dyaw)
            shift = (float(o2) - normal_o @ on_plane) * _horizontal(normal_o)
        elif self.spec.variant == "line_fit":
            dyaw = heading_angle(r2, o2)
            moved = _pivoted(r1, pivot, dyaw)
            across = _horizontal(o1 - moved)
            direction = _horizontal(o2)
            direction = direction / np.linalg.norm(direction)
            shift = across - (across @ direction) * direction
        else:
            dyaw = heading_angle(r2 - r1, o2 - o1)
            moved = _pivoted((r1 + r2) / 2.0, pivot, dyaw)
            shift = _horizontal((o1 + o2) / 2.0 - moved)
        return float(shift[0]), float(shift[2]), float(dyaw)

    def map_back(self, motion: MotionSequence, relaxed: Mapping[str, Any]) -> MotionSequence:
        """Move `motion` rigidly from the relaxed frame into the original one."""
        motion = motion.detached()
        pivot = np.asarray(motion.root)[0]
        dx, dz, dyaw = self.transform(relaxed, self.original, pivot)
        logger.debug(f"Mapping relaxed motion back: dx={dx:.4f} dz={dz:.4f} yaw={dyaw:.4f}")
        return yaw_translate(motion, dx, dz, dyaw)


def resolve_relax(choice: str | None, default: RelaxSpec) -> RelaxSpec:
    """Combine a `--relax` flag with a task's default relaxation.

    `None` keeps the default, `none` disables relaxation, and `plane`,
    `line` or `endpoints` must agree with the variant the task declares
    (the task is what names the joints and parameters).

    Raises:
        UserError: For unknown choices or a variant the task does not support
    """
    if choice is None:
        return default
    variant = RELAX_ALIASES.get(choice)
    if variant is None:
        raise UserError(f"Unknown relaxation '{choice}'; choose from {', '.join(RELAX_ALIASES)}")
    if variant == "none":
        return RelaxSpec()
    if variant != default.variant:
        supported = default.variant if default.enabled else "none"
        raise UserError(f"This task supports relaxation '{supported}', not '{variant}'")
    return default


def relax_and_minimize(
    prior: MotionPrior,
    program: ErrorProgram,
    relax: RelaxSpec,
    params: Mapping[str, Any] | None = None,
    config: OptimConfig | None = None,
    *,
    scorer: Scorer | None = None,
    progress: Progress | None = None,
) -> OptimResult:
    """Optimize while refitting the relaxed constraint every `relax_interval` steps.

    The bound `params` are the original constraint that the final motion is
    mapped back onto and scored against. Runs `config.restarts` restarts
    like `restart_search`.
    """
    return restart_search(
        prior,
        program,
        params,
        config,
        relaxation=Relaxation(relax, program, params),
        scorer=scorer,
        progress=progress,
    )
