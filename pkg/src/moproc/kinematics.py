"""Skeleton, motion representation and forward kinematics.

Motion is stored as root translation plus per-joint axis-angle rotations, so
bone lengths are structural: every pose produced by `forward_kinematics` has
exactly the template bone lengths.

Coordinates are meters with y up; the default skeleton faces +z with its left
side on +x.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.spatial.transform import Rotation

from moproc import autodiff as ad
from moproc.autodiff import ArrayLike, value_of
from moproc.configuration.defaults import DEFAULT_FPS, STANDING_ROOT_HEIGHT
from moproc.errors import SkeletonMismatchError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi

JOINT_ALIASES = {
    "root": "pelvis",
    "chest": "spine3",
    "left_hand": "left_wrist",
    "right_hand": "right_wrist",
    "left_toe": "left_foot",
    "right_toe": "right_foot",
}


class Joint(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    parent: int | None
    offset: tuple[float, float, float]


class Skeleton(BaseModel):
    """Joint hierarchy with fixed bone offsets.

    Bones are identified by their child joint: bone `j` (for every non-root
    joint `j`) runs from `parent(j)` to `j`. `mass_fraction` has one entry per
    bone in joint order.
    """

    model_config = ConfigDict(frozen=True)

    name: str = "custom"
    joints: tuple[Joint, ...]
    foot_joints: tuple[int, ...]
    head_joint: int
    neck_joint: int
    left_hand_joint: int
    chest_joint: int
    mass_fraction: tuple[float, ...]

    @model_validator(mode="after")
    def _check_hierarchy(self) -> Skeleton:
        roots = [i for i, j in enumerate(self.joints) if j.parent is None]
        if len(roots) != 1 or roots[0] != 0:
            raise ValueError("skeleton needs exactly one root, at index 0")
        if any(abs(c) > 0 for c in self.joints[0].offset):
            raise ValueError("root offset must be (0, 0, 0)")
        for i, joint in enumerate(self.joints[1:], start=1):
            if joint.parent is None or not 0 <= joint.parent < i:
                raise ValueError(f"joint {i} ({joint.name}) is not topologically sorted")
            if np.linalg.norm(joint.offset) <= 0:
                raise ValueError(f"joint {i} ({joint.name}) has a zero-length bone")
        if len(self.mass_fraction) != len(self.joints) - 1:
            raise ValueError("mass_fraction needs one entry per bone")
        if abs(sum(self.mass_fraction) - 1.0) > 1e-9:
            raise ValueError("mass fractions must sum to 1")
        n = len(self.joints)
        named = (self.head_joint, self.neck_joint, self.left_hand_joint, self.chest_joint)
        if any(not 0 <= i < n for i in (*self.foot_joints, *named)):
            raise ValueError("special joint index out of range")
        return self

    @property
    def id(self) -> str:
        return self.name

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def parents(self) -> list[int | None]:
        return [j.parent for j in self.joints]

    @property
    def offsets(self) -> np.ndarray:
        return np.array([j.offset for j in self.joints], dtype=float)

    @property
    def bone_template(self) -> np.ndarray:
        """Template length of every bone, in joint order (J - 1 entries)."""
        return np.linalg.norm(self.offsets[1:], axis=1)

    @property
    def dims_per_frame(self) -> int:
        return 3 + 3 * self.n_joints

    def joint_index(self, name: str) -> int:
        """Resolve a joint name or alias (`left_hand`, `chest`, ...) to its index.

        Raises:
            KeyError: If the name is unknown
        """
        lookup = JOINT_ALIASES.get(name, name)
        for i, joint in enumerate(self.joints):
            if joint.name == lookup:
                return i
        raise KeyError(name)

    def known_names(self) -> list[str]:
        return self.names + [a for a, target in JOINT_ALIASES.items() if target in self.names]


_DEFAULT_JOINTS: tuple[tuple[str, int | None, tuple[float, float, float]], ...] = (
    ("pelvis", None, (0.0, 0.0, 0.0)),
    ("left_hip", 0, (0.06, -0.08, 0.0)),
    ("right_hip", 0, (-0.06, -0.08, 0.0)),
    ("spine1", 0, (0.0, 0.10, 0.0)),
    ("left_knee", 1, (0.0, -0.40, 0.0)),
    ("right_knee", 2, (0.0, -0.40, 0.0)),
    ("spine2", 3, (0.0, 0.13, 0.0)),
    ("left_ankle", 4, (0.0, -0.38, 0.0)),
    ("right_ankle", 5, (0.0, -0.38, 0.0)),
    ("spine3", 6, (0.0, 0.05, 0.0)),
    ("left_foot", 7, (0.0, -0.07, 0.12)),
    ("right_foot", 8, (0.0, -0.07, 0.12)),
    ("neck", 9, (0.0, 0.21, 0.0)),
    ("left_collar", 9, (0.07, 0.12, 0.0)),
    ("right_collar", 9, (-0.07, 0.12, 0.0)),
    ("head", 12, (0.0, 0.08, 0.0)),
    ("left_shoulder", 13, (0.11, 0.03, 0.0)),
    ("right_shoulder", 14, (-0.11, 0.03, 0.0)),
    ("left_elbow", 16, (0.26, 0.0, 0.0)),
    ("right_elbow", 17, (-0.26, 0.0, 0.0)),
    ("left_wrist", 18, (0.25, 0.0, 0.0)),
    ("right_wrist", 19, (-0.25, 0.0, 0.0)),
)


def default_skeleton() -> Skeleton:
    """The 22-joint humanoid used by every shipped task.

    Joint 12 is the neck base, 15 the head (0.08 m neck bone), 20 the left
    hand. Toes (10, 11) are the foot joints. Bone masses are proportional to
    bone length.
    """
    joints = tuple(Joint(name=n, parent=p, offset=o) for n, p, o in _DEFAULT_JOINTS)
    lengths = np.linalg.norm(np.array([j.offset for j in joints[1:]]), axis=1)
    masses = lengths / lengths.sum()
    # absorb float rounding so the fractions sum to 1 within 1e-9
    masses[-1] = 1.0 - masses[:-1].sum()
    return Skeleton(
        name="default22",
        joints=joints,
        foot_joints=(10, 11),
        head_joint=15,
        neck_joint=12,
        left_hand_joint=20,
        chest_joint=9,
        mass_fraction=tuple(float(m) for m in masses),
    )


def canonicalize_axis_angle(rot: np.ndarray) -> np.ndarray:
    """Wrap axis-angle magnitudes into [0, 2*pi); smaller vectors are untouched."""
    rot = np.array(rot, dtype=float)
    theta = np.linalg.norm(rot, axis=-1, keepdims=True)
    wrap = theta >= TWO_PI
    if not wrap.any():
        return rot
    safe = np.where(theta > 0, theta, 1.0)
    return np.where(wrap, rot * (np.mod(theta, TWO_PI) / safe), rot)


@dataclass(frozen=True, eq=False)
class PoseFrame:
    root_pos: np.ndarray
    joint_rot: np.ndarray

    def __post_init__(self) -> None:
        if not (np.isfinite(self.root_pos).all() and np.isfinite(self.joint_rot).all()):
            raise ValueError("pose values must be finite")


@dataclass(eq=False)
class MotionSequence:
    """N frames of root translation and per-joint axis-angle rotations.

    `root` is (N, 3) and `rot` is (N, J, 3). Both may be autodiff variables
    while a prior decodes them during optimization.
    """

    root: ArrayLike
    rot: ArrayLike
    fps: float = DEFAULT_FPS

    def __post_init__(self) -> None:
        root_shape = np.shape(value_of(self.root))
        rot_shape = np.shape(value_of(self.rot))
        if len(root_shape) != 2 or root_shape[1] != 3:
            raise ValueError(f"root must be (N, 3), got {root_shape}")
        if len(rot_shape) != 3 or rot_shape[2] != 3 or rot_shape[0] != root_shape[0]:
            raise ValueError(f"rot must be (N, J, 3) matching root, got {rot_shape}")
        if root_shape[0] < 2:
            raise ValueError("a motion needs at least 2 frames")
        if not self.fps > 0:
            raise ValueError("fps must be positive")

    @property
    def n_frames(self) -> int:
        return np.shape(value_of(self.root))[0]

    @property
    def n_joints(self) -> int:
        return np.shape(value_of(self.rot))[1]

    @property
    def is_differentiable(self) -> bool:
        return ad.is_var(self.root) or ad.is_var(self.rot)

    @property
    def frames(self) -> list[PoseFrame]:
        root, rot = value_of(self.root), value_of(self.rot)
        return [PoseFrame(root[t].copy(), rot[t].copy()) for t in range(len(root))]

    def __iter__(self) -> Iterator[PoseFrame]:
        return iter(self.frames)

    @classmethod
    def from_frames(cls, frames: Sequence[PoseFrame], fps: float = DEFAULT_FPS) -> MotionSequence:
        counts = {np.shape(f.joint_rot)[0] for f in frames}
        if len(counts) > 1:
            raise ValueError("all frames must have the same joint count")
        return cls(
            root=np.array([f.root_pos for f in frames], dtype=float),
            rot=np.array([f.joint_rot for f in frames], dtype=float),
            fps=fps,
        )

    @classmethod
    def from_flat(cls, flat: ArrayLike, n_joints: int, fps: float = DEFAULT_FPS) -> MotionSequence:
        """Split an (N, 3 + 3J) parameter matrix into root and rotations."""
        n = np.shape(value_of(flat))[0]
        root = ad.getitem(flat, (slice(None), slice(0, 3)))
        rot = ad.reshape(ad.getitem(flat, (slice(None), slice(3, None))), (n, n_joints, 3))
        return cls(root=root, rot=rot, fps=fps)

    def flatten(self) -> ArrayLike:
        """(N, 3 + 3J) parameter matrix, differentiable when the motion is."""
        n = self.n_frames
        return ad.concatenate(
            [self.root, ad.reshape(self.rot, (n, 3 * self.n_joints))], axis=1
        )

    def detached(self) -> MotionSequence:
        return MotionSequence(
            root=value_of(self.root).copy(), rot=value_of(self.rot).copy(), fps=self.fps
        )

    def canonicalized(self) -> MotionSequence:
        return MotionSequence(
            root=value_of(self.root).copy(),
            rot=canonicalize_axis_angle(value_of(self.rot)),
            fps=self.fps,
        )


@dataclass(eq=False)
class PositionSequence:
    """Global joint positions, (N, J, 3), y up."""

    pos: ArrayLike
    fps: float = DEFAULT_FPS
    skeleton_name: str = field(default="default22", compare=False)

    def __post_init__(self) -> None:
        shape = np.shape(value_of(self.pos))
        if len(shape) != 3 or shape[2] != 3:
            raise ValueError(f"positions must be (N, J, 3), got {shape}")

    @property
    def n_frames(self) -> int:
        return np.shape(value_of(self.pos))[0]

    @property
    def n_joints(self) -> int:
        return np.shape(value_of(self.pos))[1]

    def joint(self, j: int) -> ArrayLike:
        return ad.getitem(self.pos, (slice(None), j))

    def values(self) -> np.ndarray:
        return value_of(self.pos)


def rest_motion(
    skeleton: Skeleton,
    n_frames: int,
    fps: float = DEFAULT_FPS,
    root_height: float = STANDING_ROOT_HEIGHT,
) -> MotionSequence:
    """A motionless T-pose standing with the toes just above the ground."""
    root = np.zeros((n_frames, 3))
    root[:, 1] = root_height
    return MotionSequence(root=root, rot=np.zeros((n_frames, skeleton.n_joints, 3)), fps=fps)


def _skew(r: ArrayLike) -> ArrayLike:
    rx, ry, rz = (ad.component(r, i) for i in range(3))
    zero = np.zeros(np.shape(value_of(r))[:-1])
    rows = [
        ad.stack([zero, ad.neg(rz), ry], axis=-1),
        ad.stack([rz, zero, ad.neg(rx)], axis=-1),
        ad.stack([ad.neg(ry), rx, zero], axis=-1),
    ]
    return ad.stack(rows, axis=-2)


def axis_angle_to_matrix(rot: ArrayLike) -> ArrayLike:
    """Rodrigues formula R = I + A K + B K^2 over a batch of rotation vectors."""
    theta_sq = ad.sum(ad.mul(rot, rot), axis=-1)
    coef_a, coef_b = ad.rotation_coefficients(theta_sq)
    shape = np.shape(value_of(theta_sq)) + (1, 1)
    k = _skew(rot)
    k_sq = ad.matmul(k, k)
    linear = ad.mul(ad.reshape(coef_a, shape), k)
    quadratic = ad.mul(ad.reshape(coef_b, shape), k_sq)
    return ad.add(ad.add(np.eye(3), linear), quadratic)


def forward_kinematics(skeleton: Skeleton, motion: MotionSequence) -> PositionSequence:
    """Global joint positions of `motion`.

    Differentiable with respect to root translation and every joint rotation
    when the motion holds autodiff variables.

    Raises:
        SkeletonMismatchError: If the motion's joint count differs from the skeleton's
    """
    if motion.n_joints != skeleton.n_joints:
        raise SkeletonMismatchError(skeleton.n_joints, motion.n_joints)

    local = axis_angle_to_matrix(motion.rot)
    offsets = skeleton.offsets
    orientation: list[ArrayLike] = []
    position: list[ArrayLike] = []
    for j, parent in enumerate(skeleton.parents):
        rot_j = ad.getitem(local, (slice(None), j))
        if parent is None:
            orientation.append(rot_j)
            position.append(motion.root)
            continue
        orientation.append(ad.matmul(orientation[parent], rot_j))
        position.append(ad.add(position[parent], ad.matvec(orientation[parent], offsets[j])))
    return PositionSequence(
        pos=ad.stack(position, axis=1), fps=motion.fps, skeleton_name=skeleton.name
    )


def finite_difference(pos: PositionSequence | ArrayLike, k: int, fps: float | None = None) -> ArrayLike:
    """k-th forward difference along frames, scaled by fps**k (units m/s**k).

    Raises:
        ValueError: If k < 1 or k >= N
    """
    if isinstance(pos, PositionSequence):
        fps = pos.fps if fps is None else fps
        pos = pos.pos
    if fps is None:
        fps = DEFAULT_FPS
    n = np.shape(value_of(pos))[0]
    if k < 1:
        raise ValueError(f"difference order must be >= 1, got {k}")
    if k >= n:
        raise ValueError(f"difference order {k} needs more than {n} frames")
    diff = pos
    for _ in range(k):
        diff = ad.sub(ad.getitem(diff, slice(1, None)), ad.getitem(diff, slice(None, -1)))
    return ad.mul(diff, float(fps) ** k)


def bone_lengths(skeleton: Skeleton, pos: PositionSequence | np.ndarray) -> np.ndarray:
    """Per-frame |child - parent| for every bone, shape (N, J - 1)."""
    p = pos.values() if isinstance(pos, PositionSequence) else value_of(pos)
    children = np.arange(1, skeleton.n_joints)
    parents = np.array(skeleton.parents[1:], dtype=int)
    return np.linalg.norm(p[:, children] - p[:, parents], axis=-1)


def heading_angle(u: Sequence[float], v: Sequence[float]) -> float:
    """Yaw (about +y) that turns the horizontal part of `u` onto that of `v`."""
    ux, uz = float(u[0]), float(u[2])
    vx, vz = float(v[0]), float(v[2])
    return float(np.arctan2(uz * vx - ux * vz, ux * vx + uz * vz))


def yaw_matrix(dyaw: float) -> np.ndarray:
    return Rotation.from_rotvec([0.0, dyaw, 0.0]).as_matrix()


def yaw_translate_points(
    points: np.ndarray, pivot: np.ndarray, dx: float, dz: float, dyaw: float
) -> np.ndarray:
    """Apply the rigid map p -> R_y(dyaw) (p - pivot) + pivot + (dx, 0, dz)."""
    points = np.asarray(points, dtype=float)
    pivot = np.asarray(pivot, dtype=float)
    rotated = (points - pivot) @ yaw_matrix(dyaw).T + pivot
    return rotated + np.array([dx, 0.0, dz])


def yaw_translate(motion: MotionSequence, dx: float, dz: float, dyaw: float) -> MotionSequence:
    """Rotate about the vertical axis through the first-frame root, then translate.

    The root rotation is composed with the yaw so the whole body turns
    rigidly; all other joint rotations are local and stay unchanged.
    """
    root = value_of(motion.root)
    rot = value_of(motion.rot).copy()
    new_root = yaw_translate_points(root, root[0], dx, dz, dyaw)
    if dyaw != 0.0:
        yaw = Rotation.from_rotvec([0.0, dyaw, 0.0])
        rot[:, 0] = (yaw * Rotation.from_rotvec(rot[:, 0])).as_rotvec()
    return MotionSequence(root=new_root, rot=rot, fps=motion.fps)
