"""Atomic constraint library and logical operators.

Every atom is a differentiable error over joint positions: zero when the
constraint holds, positive otherwise (signed halfspace distance and `not_`
excepted). Per-frame atoms return one value per frame; `keyframe` averages a
per-frame error over selected frames.

Logical operators combine errors:

    lt(E, m)   = max(E - m, 0)
    gt(E, m)   = max(m - E, 0)
    and_(a, b) = a + b
    or_(a, b)  = min(a, b)
    not_(E)    = -E            (exposed in the DSL only as far(E, bound))
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Sequence, Union

import numpy as np
from scipy.spatial import ConvexHull

from moproc import autodiff as ad
from moproc.autodiff import ArrayLike, value_of
from moproc.configuration.defaults import (
    DEFAULT_FAR_BOUND,
    SUPPORT_DISC_RADIUS,
    SUPPORT_DISC_SAMPLES,
)
from moproc.errors import EvaluationError
from moproc.kinematics import PositionSequence, Skeleton, finite_difference

logger = logging.getLogger(__name__)

FrameRef = Union[int, Literal["first", "mid", "last"]]


# -- frame selectors ---------------------------------------------------------


@dataclass(frozen=True)
class AllFrames:
    pass


@dataclass(frozen=True)
class FrameAt:
    ref: FrameRef


@dataclass(frozen=True)
class FrameRange:
    start: FrameRef
    stop: FrameRef


@dataclass(frozen=True)
class FrameSet:
    refs: tuple[FrameRef, ...]


FrameSelector = Union[AllFrames, FrameAt, FrameRange, FrameSet]


def resolve_frame(ref: FrameRef, n_frames: int) -> int:
    """Map a frame reference to an index; mid is floor((N - 1) / 2)."""
    if ref == "first":
        index = 0
    elif ref == "mid":
        index = (n_frames - 1) // 2
    elif ref == "last":
        index = n_frames - 1
    else:
        index = int(ref)
    if not 0 <= index < n_frames:
        raise EvaluationError(f"frame {index} is outside 0..{n_frames - 1}")
    return index


def resolve_frames(selector: FrameSelector, n_frames: int) -> np.ndarray:
    """Frame indices selected by `selector` for a motion of `n_frames` frames."""
    if isinstance(selector, AllFrames):
        return np.arange(n_frames)
    if isinstance(selector, FrameAt):
        return np.array([resolve_frame(selector.ref, n_frames)])
    if isinstance(selector, FrameRange):
        start = resolve_frame(selector.start, n_frames)
        stop = resolve_frame(selector.stop, n_frames)
        if start > stop:
            raise EvaluationError(f"empty frame range {start}..{stop}")
        return np.arange(start, stop + 1)
    if isinstance(selector, FrameSet):
        if not selector.refs:
            raise EvaluationError("empty frame set")
        return np.array([resolve_frame(r, n_frames) for r in selector.refs])
    raise TypeError(f"not a frame selector: {selector!r}")


def keyframe(term: ArrayLike, selector: FrameSelector, n_frames: int | None = None) -> ArrayLike:
    """Average a per-frame error over the selected frames only."""
    values = value_of(term)
    if values.ndim == 0:
        return term
    frames = resolve_frames(selector, n_frames if n_frames is not None else len(values))
    return ad.mean(ad.getitem(term, frames))


# -- logical operators -------------------------------------------------------


def lt(error: ArrayLike, margin: ArrayLike) -> ArrayLike:
    return ad.maximum(ad.sub(error, margin), 0.0)


def gt(error: ArrayLike, margin: ArrayLike) -> ArrayLike:
    return ad.maximum(ad.sub(margin, error), 0.0)


def and_(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    return ad.add(a, b)


def or_(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    return ad.minimum(a, b)


def not_(error: ArrayLike) -> ArrayLike:
    return ad.neg(error)


def far(error: ArrayLike, bound: ArrayLike = DEFAULT_FAR_BOUND) -> ArrayLike:
    """Bounded negation: max(bound - E, 0)."""
    return ad.maximum(ad.sub(bound, error), 0.0)


# -- geometric primitives ----------------------------------------------------


@dataclass(frozen=True)
class Point:
    p: ArrayLike


@dataclass(frozen=True)
class Line:
    origin: ArrayLike
    direction: ArrayLike


@dataclass(frozen=True)
class Plane:
    normal: ArrayLike
    offset: ArrayLike


@dataclass(frozen=True)
class Halfspace:
    """Points with n . p <= offset are inside."""

    normal: ArrayLike
    offset: ArrayLike


@dataclass(frozen=True)
class Sphere:
    center: ArrayLike
    radius: ArrayLike


GeometricPrimitive = Union[Point, Line, Plane, Halfspace, Sphere]


def _column(x: ArrayLike) -> ArrayLike:
    """Append a unit axis so per-frame scalars broadcast against vectors."""
    shape = np.shape(value_of(x))
    return ad.reshape(x, shape + (1,))


def unit(v: ArrayLike, what: str = "direction") -> ArrayLike:
    length = ad.norm2(v)
    if np.any(value_of(length) < 1e-12):
        raise EvaluationError(f"degenerate primitive: zero-length {what}")
    return ad.div(v, _column(length))


def distance_to_point(p: ArrayLike, q: ArrayLike) -> ArrayLike:
    return ad.norm2(ad.sub(p, q))


def distance_to_plane(p: ArrayLike, normal: ArrayLike, offset: ArrayLike) -> ArrayLike:
    return ad.absolute(signed_distance_to_halfspace(p, normal, offset))


def signed_distance_to_halfspace(p: ArrayLike, normal: ArrayLike, offset: ArrayLike) -> ArrayLike:
    return ad.sub(ad.dot(p, unit(normal, "normal")), offset)


def distance_to_line(p: ArrayLike, origin: ArrayLike, direction: ArrayLike) -> ArrayLike:
    d = unit(direction)
    v = ad.sub(p, origin)
    along = ad.mul(_column(ad.dot(v, d)), d)
    return ad.norm2(ad.sub(v, along))


def distance_to_sphere(p: ArrayLike, center: ArrayLike, radius: ArrayLike) -> ArrayLike:
    if np.any(value_of(radius) <= 0):
        raise EvaluationError("degenerate primitive: sphere radius must be positive")
    return ad.absolute(ad.sub(ad.norm2(ad.sub(p, center)), radius))


def geometric_distance(point: ArrayLike, primitive: GeometricPrimitive) -> ArrayLike:
    """Euclidean distance from `point` to `primitive` (signed for halfspaces)."""
    if isinstance(primitive, Point):
        return distance_to_point(point, primitive.p)
    if isinstance(primitive, Line):
        return distance_to_line(point, primitive.origin, primitive.direction)
    if isinstance(primitive, Plane):
        return distance_to_plane(point, primitive.normal, primitive.offset)
    if isinstance(primitive, Halfspace):
        return signed_distance_to_halfspace(point, primitive.normal, primitive.offset)
    if isinstance(primitive, Sphere):
        return distance_to_sphere(point, primitive.center, primitive.radius)
    raise TypeError(f"not a geometric primitive: {primitive!r}")


# -- position, dynamics, distance and direction atoms ------------------------


def _check_lengths(a: ArrayLike, b: ArrayLike) -> None:
    sa, sb = np.shape(value_of(a)), np.shape(value_of(b))
    if len(sa) == 2 and len(sb) == 2 and sa[0] != sb[0]:
        raise EvaluationError(f"trajectory lengths differ: {sa[0]} vs {sb[0]}")


def abs_position_error(traj: ArrayLike, target_traj: ArrayLike, n: float = 2) -> ArrayLike:
    """Mean L-n distance between a joint trajectory and its target."""
    _check_lengths(traj, target_traj)
    return ad.mean(ad.pnorm(ad.sub(traj, target_traj), n))


def dynamics_error(
    traj: ArrayLike,
    target_derivative: ArrayLike,
    k: int,
    fps: float,
    frames: Sequence[int] | None = None,
    n: float = 2,
) -> ArrayLike:
    """Mean distance between the k-th difference of `traj` and its target.

    `frames` restricts the average to selected difference frames.
    """
    try:
        derivative = finite_difference(traj, k, fps)
    except ValueError as e:
        raise EvaluationError(str(e)) from e
    per_frame = ad.pnorm(ad.sub(derivative, target_derivative), n)
    if frames is not None:
        per_frame = ad.getitem(per_frame, np.asarray(frames, dtype=int))
    return ad.mean(per_frame)


def relative_distance(a_traj: ArrayLike, b_traj: ArrayLike) -> ArrayLike:
    """Per-frame |A_t - B_t|."""
    _check_lengths(a_traj, b_traj)
    return ad.norm2(ad.sub(a_traj, b_traj))


def direction_cosine_error(v: ArrayLike, d: ArrayLike) -> ArrayLike:
    """Per-frame 1 - cos(angle between v and d), in [0, 2]."""
    cosine = ad.div(ad.dot(v, unit(d)), ad.norm2(v))
    return ad.sub(1.0, cosine)


def directional_error(
    bone_child_traj: ArrayLike, bone_parent_traj: ArrayLike, d: ArrayLike
) -> ArrayLike:
    """Mean of 1 - cos(angle between child - parent and d)."""
    bone = ad.sub(bone_child_traj, bone_parent_traj)
    return ad.mean(direction_cosine_error(bone, d))


# -- center of mass and support ----------------------------------------------


def com_weights(skeleton: Skeleton, masses: Sequence[float] | None = None) -> np.ndarray:
    """Per-joint weights w with COM = sum_j w_j p_j (bone midpoints, mass-weighted)."""
    masses = np.asarray(skeleton.mass_fraction if masses is None else masses, dtype=float)
    if len(masses) != skeleton.n_joints - 1:
        raise EvaluationError("need one mass per bone")
    if abs(masses.sum() - 1.0) > 1e-9:
        raise EvaluationError("bone masses must sum to 1")
    weights = np.zeros(skeleton.n_joints)
    for bone, child in enumerate(range(1, skeleton.n_joints)):
        weights[child] += 0.5 * masses[bone]
        weights[skeleton.parents[child]] += 0.5 * masses[bone]
    return weights


def center_of_mass(
    skeleton: Skeleton, pos: PositionSequence | ArrayLike, masses: Sequence[float] | None = None
) -> ArrayLike:
    """Per-frame center of mass, (N, 3)."""
    p = pos.pos if isinstance(pos, PositionSequence) else pos
    weights = com_weights(skeleton, masses)
    return ad.sum(ad.mul(p, weights[None, :, None]), axis=1)


@dataclass(frozen=True)
class SupportRegion:
    """Convex hull of a disc of `radius` around each stance foot, per frame.

    `centers` is (N, F, 3) (or (F, 3) for a static region); only x and z are
    used. Each disc is represented by `samples` points on its rim.
    """

    centers: ArrayLike
    radius: float = SUPPORT_DISC_RADIUS
    samples: int = SUPPORT_DISC_SAMPLES

    def __post_init__(self) -> None:
        shape = np.shape(value_of(self.centers))
        if len(shape) < 2 or shape[-2] == 0:
            raise EvaluationError("support region needs at least one stance foot")
        if self.radius <= 0:
            raise EvaluationError("support disc radius must be positive")

    def rim_offsets(self) -> np.ndarray:
        angles = 2.0 * np.pi * np.arange(self.samples) / self.samples
        return self.radius * np.stack([np.cos(angles), np.sin(angles)], axis=-1)

    def centers_xz(self, n_frames: int) -> ArrayLike:
        c = self.centers
        if np.ndim(value_of(c)) == 2:
            c = ad.add(np.zeros((n_frames, 1, 1)), c)
        return ad.getitem(c, (slice(None), slice(None), [0, 2]))


def _nearest_hull_feature(q: np.ndarray, hull_pts: np.ndarray) -> tuple[int, int, int]:
    """(case, a, b) for a query against a CCW polygon.

    case 0: inside; 1: nearest point on edge a-b; 2: nearest point is vertex a.
    """
    m = len(hull_pts)
    a_pts = hull_pts
    b_pts = np.roll(hull_pts, -1, axis=0)
    edge = b_pts - a_pts
    rel = q - a_pts
    cross = edge[:, 0] * rel[:, 1] - edge[:, 1] * rel[:, 0]
    if np.all(cross >= 0):
        return 0, 0, 1 % m
    u = np.clip(np.sum(rel * edge, axis=1) / np.sum(edge * edge, axis=1), 0.0, 1.0)
    nearest = a_pts + u[:, None] * edge
    i = int(np.argmin(np.linalg.norm(q - nearest, axis=1)))
    if 0.0 < u[i] < 1.0:
        return 1, i, (i + 1) % m
    if u[i] <= 0.0:
        return 2, i, (i + 1) % m
    return 2, (i + 1) % m, (i + 2) % m


def support_distance(point_xz: ArrayLike, region: SupportRegion) -> ArrayLike:
    """Per-frame distance from a ground point to the support hull (0 inside).

    Hull membership and the nearest feature are chosen on detached values;
    the returned distance is differentiable in both the point and the feet.
    """
    q_all = value_of(point_xz)
    n = q_all.shape[0]
    centers = region.centers_xz(n)
    c_all = value_of(centers)
    rim = region.rim_offsets()
    s = region.samples

    cases = np.zeros(n, dtype=int)
    va = np.zeros(n, dtype=int)
    vb = np.zeros(n, dtype=int)
    for t in range(n):
        candidates = (c_all[t][:, None, :] + rim[None, :, :]).reshape(-1, 2)
        order = ConvexHull(candidates).vertices
        case, a, b = _nearest_hull_feature(q_all[t], candidates[order])
        cases[t], va[t], vb[t] = case, order[a], order[b]

    frames = np.arange(n)
    a_pts = ad.add(ad.getitem(centers, (frames, va // s)), rim[va % s])
    b_pts = ad.add(ad.getitem(centers, (frames, vb // s)), rim[vb % s])
    to_q = ad.sub(point_xz, a_pts)
    edge = ad.sub(b_pts, a_pts)
    edge_distance = ad.div(ad.absolute(ad.cross2(edge, to_q)), ad.norm2(edge))
    vertex_distance = ad.norm2(to_q)
    return ad.add(
        ad.where(cases == 1, edge_distance, 0.0),
        ad.where(cases == 2, vertex_distance, 0.0),
    )


def com_error(
    skeleton: Skeleton,
    pos: PositionSequence | ArrayLike,
    support: SupportRegion,
    masses: Sequence[float] | None = None,
) -> ArrayLike:
    """Mean distance from the COM ground projection to the support region."""
    com = center_of_mass(skeleton, pos, masses)
    com_xz = ad.getitem(com, (slice(None), [0, 2]))
    return ad.mean(support_distance(com_xz, support))
