"""Motion priors: differentiable decoders from a latent code to a motion.

Every prior exposes the same small contract (`latent_dim`, `n_frames`,
`decode`, `sample_latent`), so the optimizer never needs to know which
one it drives. Three are shipped:

* `IdentityPrior`: the latent code is the flattened motion itself (IK).
* `DCTPrior`: each pose channel is a truncated cosine series in time.
* `PCAPrior`: mean plus principal directions of procedurally generated walks.

The optional text condition of a run is recorded in its manifest; none of
these priors reads it.
"""

from __future__ import annotations

import json
import logging
import re
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import ValidationError
from scipy.spatial.transform import Rotation
from sklearn.decomposition import PCA

from moproc import autodiff as ad
from moproc.autodiff import ArrayLike, value_of
from moproc.configuration.defaults import DEFAULT_DCT_COEFFICIENTS, DEFAULT_FPS, DEFAULT_FRAMES
from moproc.configuration.models import GaitParams, GaitRanges, PCABlob, PriorSpec
from moproc.errors import PriorSpecError, UserError
from moproc.kinematics import MotionSequence, Skeleton, default_skeleton, rest_motion

logger = logging.getLogger(__name__)

IDENTITY_INIT_NOISE = 0.05
DCT_INIT_NOISE = 0.1
PCA_BLOB_VERSION = 1
# relative explained variance below which a component counts as degenerate
PCA_RANK_TOLERANCE = 1e-10


class MotionPrior(ABC):
    """A deterministic, differentiable map from latent vectors to motions."""

    name: str = "prior"

    def __init__(self, n_frames: int, skeleton: Skeleton | None = None, fps: float = DEFAULT_FPS):
        if n_frames < 2:
            raise ValueError(f"a prior needs at least 2 frames, got {n_frames}")
        self.n_frames = n_frames
        self.skeleton = skeleton or default_skeleton()
        self.fps = float(fps)

    @property
    def dims_per_frame(self) -> int:
        return self.skeleton.dims_per_frame

    @property
    @abstractmethod
    def latent_dim(self) -> int: ...

    @abstractmethod
    def decode(self, z: ArrayLike) -> MotionSequence:
        """Decode a flat latent vector of length `latent_dim`."""

    @abstractmethod
    def sample_latent(self, seed: int, restart: int = 0) -> np.ndarray:
        """A starting point for optimization, deterministic per seed and restart index."""

    def _check_latent(self, z: ArrayLike) -> None:
        shape = np.shape(value_of(z))
        if shape != (self.latent_dim,):
            raise ValueError(f"{self.name} expects a latent of shape ({self.latent_dim},), got {shape}")

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n_frames={self.n_frames}, latent_dim={self.latent_dim})"


class IdentityPrior(MotionPrior):
    """The motion parameters themselves; optimizing through it is plain IK.

    Restart 0 starts exactly at `initial` (a standing pose unless given).
    Later restarts add one small Gaussian pose offset shared by every frame,
    so the start stays as smooth as `initial`.
    """

    name = "identity"

    def __init__(
        self,
        n_frames: int,
        skeleton: Skeleton | None = None,
        fps: float = DEFAULT_FPS,
        initial: MotionSequence | None = None,
    ):
        super().__init__(n_frames, skeleton, fps)
        initial = initial or rest_motion(self.skeleton, n_frames, fps)
        if initial.n_frames != n_frames or initial.n_joints != self.skeleton.n_joints:
            raise ValueError("initial motion does not match the prior's frames and skeleton")
        self.initial = np.asarray(value_of(initial.flatten()), dtype=float).ravel()

    @property
    def latent_dim(self) -> int:
        return self.dims_per_frame * self.n_frames

    def decode(self, z: ArrayLike) -> MotionSequence:
        self._check_latent(z)
        flat = ad.reshape(z, (self.n_frames, self.dims_per_frame))
        return MotionSequence.from_flat(flat, self.skeleton.n_joints, self.fps)

    def encode(self, motion: MotionSequence) -> np.ndarray:
        return np.asarray(value_of(motion.flatten()), dtype=float).ravel()

    def sample_latent(self, seed: int, restart: int = 0) -> np.ndarray:
        if restart == 0:
            return self.initial.copy()
        rng = np.random.default_rng(seed)
        offset = IDENTITY_INIT_NOISE * rng.standard_normal(self.dims_per_frame)
        return self.initial + np.tile(offset, self.n_frames)


def dct_basis(n_frames: int, n_coefficients: int) -> np.ndarray:
    """Inverse type-II cosine basis, (N, K); column 0 is all ones."""
    n = np.arange(n_frames)[:, None]
    k = np.arange(n_coefficients)[None, :]
    return np.cos(np.pi * k * (2 * n + 1) / (2 * n_frames))


class DCTPrior(MotionPrior):
    """Low-frequency cosine expansion of every pose channel.

    The latent is a (K, D) coefficient matrix flattened row-major; the decoded
    (N, D) motion is `basis @ Z`. Decoding is linear, so `z = 0` is the T-pose
    at the origin.
    Starting points are the standing pose with noise that shrinks for higher
    frequencies.
    """

    name = "dct"

    def __init__(
        self,
        n_frames: int,
        n_coefficients: int = DEFAULT_DCT_COEFFICIENTS,
        skeleton: Skeleton | None = None,
        fps: float = DEFAULT_FPS,
    ):
        super().__init__(n_frames, skeleton, fps)
        if not 1 <= n_coefficients <= n_frames:
            raise ValueError(
                f"DCT prior needs 1 <= K <= N, got K={n_coefficients} for N={n_frames}"
            )
        self.n_coefficients = n_coefficients
        self.basis = dct_basis(n_frames, n_coefficients)

    @property
    def latent_dim(self) -> int:
        return self.dims_per_frame * self.n_coefficients

    def decode(self, z: ArrayLike) -> MotionSequence:
        self._check_latent(z)
        coefficients = ad.reshape(z, (self.n_coefficients, self.dims_per_frame))
        flat = ad.matmul(self.basis, coefficients)
        return MotionSequence.from_flat(flat, self.skeleton.n_joints, self.fps)

    def sample_latent(self, seed: int, restart: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        falloff = 1.0 / (1.0 + np.arange(self.n_coefficients))[:, None]
        z = DCT_INIT_NOISE * rng.standard_normal((self.n_coefficients, self.dims_per_frame)) * falloff
        z[0] += np.asarray(rest_motion(self.skeleton, 2, self.fps).flatten())[0]
        return z.ravel()


class PCAPrior(MotionPrior):
    """Mean motion plus scaled principal directions.

    `basis` has orthonormal rows (m, N*D); `scale` holds the standard
    deviation along each direction so that latent coordinates have unit
    variance over the training set: decode(z) = mean + (scale * z) @ basis.
    """

    name = "pca"

    def __init__(
        self,
        mean: np.ndarray,
        basis: np.ndarray,
        scale: np.ndarray,
        n_frames: int,
        skeleton: Skeleton | None = None,
        fps: float = DEFAULT_FPS,
    ):
        super().__init__(n_frames, skeleton, fps)
        self.mean = np.asarray(mean, dtype=float)
        self.basis = np.atleast_2d(np.asarray(basis, dtype=float))
        self.scale = np.asarray(scale, dtype=float)
        if self.mean.shape != (n_frames * self.dims_per_frame,):
            raise ValueError("PCA mean does not match the frame count and skeleton")
        if self.basis.shape != (len(self.scale), self.mean.size):
            raise ValueError("PCA basis must be (m, N*D) with one scale per row")

    @property
    def latent_dim(self) -> int:
        return len(self.scale)

    def decode(self, z: ArrayLike) -> MotionSequence:
        self._check_latent(z)
        weights = ad.reshape(ad.mul(z, self.scale), (1, self.latent_dim))
        flat = ad.add(self.mean, ad.reshape(ad.matmul(weights, self.basis), (self.mean.size,)))
        flat = ad.reshape(flat, (self.n_frames, self.dims_per_frame))
        return MotionSequence.from_flat(flat, self.skeleton.n_joints, self.fps)

    def encode(self, motion: MotionSequence) -> np.ndarray:
        """Project a motion onto the principal directions (latent coordinates)."""
        flat = np.asarray(value_of(motion.flatten()), dtype=float).ravel()
        return (self.basis @ (flat - self.mean)) / self.scale

    def sample_latent(self, seed: int, restart: int = 0) -> np.ndarray:
        return np.random.default_rng(seed).standard_normal(self.latent_dim)

    def to_blob(self) -> PCABlob:
        return PCABlob(
            version=PCA_BLOB_VERSION,
            mean=self.mean.tolist(),
            basis=self.basis.tolist(),
            scale=self.scale.tolist(),
            dims=self.mean.size,
            fps=self.fps,
            skeleton=self.skeleton.id,
            n_frames=self.n_frames,
        )

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_blob().model_dump_json())
        logger.info(f"Saved PCA prior ({self.latent_dim} dims) to {path}")
        return path

    @classmethod
    def load(cls, path: Path, skeleton: Skeleton | None = None) -> PCAPrior:
        """Read a blob written by `save`.

        Raises:
            PriorSpecError: If the file is missing, malformed, from another
                blob version or trained on a different skeleton
        """
        spec = f"pca:{path}"
        try:
            blob = PCABlob.model_validate_json(Path(path).read_text())
        except FileNotFoundError:
            raise PriorSpecError(spec, "file not found") from None
        except (ValidationError, json.JSONDecodeError) as e:
            raise PriorSpecError(spec, f"malformed blob: {e}") from None
        if blob.version != PCA_BLOB_VERSION:
            raise PriorSpecError(spec, f"unsupported blob version {blob.version}")
        skeleton = skeleton or default_skeleton()
        if blob.skeleton != skeleton.id:
            raise PriorSpecError(spec, f"trained on skeleton '{blob.skeleton}', not '{skeleton.id}'")
        return cls(
            mean=np.array(blob.mean),
            basis=np.array(blob.basis),
            scale=np.array(blob.scale),
            n_frames=blob.n_frames,
            skeleton=skeleton,
            fps=blob.fps,
        )


def identity_prior(n_frames: int, skeleton: Skeleton | None = None, fps: float = DEFAULT_FPS) -> IdentityPrior:
    return IdentityPrior(n_frames, skeleton, fps)


def dct_prior(
    n_frames: int,
    n_coefficients: int = DEFAULT_DCT_COEFFICIENTS,
    skeleton: Skeleton | None = None,
    fps: float = DEFAULT_FPS,
) -> DCTPrior:
    return DCTPrior(n_frames, n_coefficients, skeleton, fps)


def pca_prior_train(
    dataset: Sequence[MotionSequence], n_components: int, skeleton: Skeleton | None = None
) -> PCAPrior:
    """Fit a PCA prior to motions of equal length, fps and joint count.

    Components with (numerically) zero variance are dropped with a warning,
    so the returned prior may have fewer than `n_components` dimensions.

    Raises:
        ValueError: If the dataset is smaller than `n_components`, mixes
            shapes, or has no variance at all
    """
    if n_components < 1:
        raise ValueError("n_components must be at least 1")
    if len(dataset) < n_components:
        raise ValueError(f"need at least {n_components} motions, got {len(dataset)}")
    first = dataset[0]
    if any(m.n_frames != first.n_frames or m.n_joints != first.n_joints or m.fps != first.fps for m in dataset):
        raise ValueError("all training motions need the same frame count, fps and joint count")

    data = np.stack([np.asarray(value_of(m.flatten()), dtype=float).ravel() for m in dataset])
    pca = PCA(n_components=n_components, svd_solver="full").fit(data)

    variance = pca.explained_variance_
    total = float(variance.max()) if variance.size else 0.0
    keep = variance > PCA_RANK_TOLERANCE * max(total, 1.0)
    rank = int(keep.sum())
    if rank == 0:
        raise ValueError("training motions are identical; nothing to learn")
    if rank < n_components:
        logger.warning(
            f"Dataset covariance has rank {rank}; reducing PCA prior from "
            f"{n_components} to {rank} dimensions"
        )

    skeleton = skeleton or default_skeleton()
    if first.n_joints != skeleton.n_joints:
        raise ValueError(f"training motions have {first.n_joints} joints, skeleton has {skeleton.n_joints}")
    return PCAPrior(
        mean=pca.mean_,
        basis=pca.components_[keep],
        scale=np.sqrt(variance[keep]),
        n_frames=first.n_frames,
        skeleton=skeleton,
        fps=first.fps,
    )


# Procedural gait ---------------------------------------------------------

THIGH_LENGTH = 0.40
SHIN_LENGTH = 0.38
ROOT_CLEARANCE = 0.86  # pelvis height above ground while walking
ANKLE_CLEARANCE = 0.09  # ankle height above ground with a flat foot
FOOT_WIDTH = 0.08  # lateral ankle offset from the walking line
STANCE_FRACTION = 0.6
RIGHT_FOOT_OFFSET = 0.5  # cycle offset of the right foot
# swing sub-phases: lift over [0, 0.2], travel over [0.15, 0.85], lower over [0.8, 1]
SWING_LIFT = 0.2
SWING_TRAVEL = (0.15, 0.85)
ARM_DROP = 1.3  # radians from the T-pose down toward the body


def _ease(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def _foot_track(
    t: np.ndarray, params: GaitParams, lateral: float, offset: float
) -> tuple[np.ndarray, np.ndarray]:
    """Ankle targets (N, 3) and stance flags (N,) of one foot."""
    cycle = 2.0 / params.cadence
    speed = params.stride * params.cadence
    u = t / cycle + params.phase - offset
    k = np.floor(u)
    s = u - k
    stance = s < STANCE_FRACTION

    # plant point of cycle k sits under the hip at mid-stance
    def plant(index: np.ndarray) -> np.ndarray:
        mid = (index + STANCE_FRACTION / 2 + offset - params.phase) * cycle
        return speed * mid

    sigma = (s - STANCE_FRACTION) / (1.0 - STANCE_FRACTION)
    low, high = SWING_TRAVEL
    travel = _ease((sigma - low) / (high - low))
    swing_z = plant(k) + (plant(k + 1) - plant(k)) * travel
    lift = np.minimum(_ease(sigma / SWING_LIFT), _ease((1.0 - sigma) / SWING_LIFT))

    z = np.where(stance, plant(k), swing_z)
    y = params.ground_height + ANKLE_CLEARANCE + np.where(stance, 0.0, params.step_height * lift)
    x = np.full_like(t, lateral)
    return np.stack([x, y, z], axis=-1), stance


def _leg_rotations(
    hip: np.ndarray, ankle: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two-bone IK: hip, knee and ankle rotation vectors that reach `ankle`.

    The knee flexes about +x so the shin swings backwards; the ankle undoes
    the accumulated leg rotation to keep the foot flat and facing +z.
    """
    reach = ankle - hip
    length = np.linalg.norm(reach, axis=-1)
    length = np.clip(length, abs(THIGH_LENGTH - SHIN_LENGTH) + 1e-6, (THIGH_LENGTH + SHIN_LENGTH) * 0.999)
    cos_knee = (length**2 - THIGH_LENGTH**2 - SHIN_LENGTH**2) / (2.0 * THIGH_LENGTH * SHIN_LENGTH)
    knee = np.arccos(np.clip(cos_knee, -1.0, 1.0))

    # ankle position in the hip frame before the hip turns
    local = np.stack(
        [
            np.zeros_like(knee),
            -THIGH_LENGTH - SHIN_LENGTH * np.cos(knee),
            -SHIN_LENGTH * np.sin(knee),
        ],
        axis=-1,
    )
    v = local / np.linalg.norm(local, axis=-1, keepdims=True)
    u = reach / np.linalg.norm(reach, axis=-1, keepdims=True)
    axis = np.cross(v, u)
    sin_angle = np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.arctan2(sin_angle, np.sum(v * u, axis=-1, keepdims=True))
    safe = np.where(sin_angle > 1e-12, sin_angle, 1.0)
    hip_rot = Rotation.from_rotvec(np.where(sin_angle > 1e-12, axis / safe * angle, 0.0))

    knee_rot = Rotation.from_rotvec(np.stack([knee, np.zeros_like(knee), np.zeros_like(knee)], axis=-1))
    ankle_rot = (hip_rot * knee_rot).inv()
    return hip_rot.as_rotvec(), knee_rot.as_rotvec(), ankle_rot.as_rotvec()


def synth_walk(
    params: GaitParams | None = None,
    n_frames: int = DEFAULT_FRAMES,
    fps: float = DEFAULT_FPS,
    skeleton: Skeleton | None = None,
) -> tuple[MotionSequence, np.ndarray]:
    """A procedural straight walk along +z and its ground-truth stance mask.

    The pelvis advances at stride * cadence with a lateral sway. Each foot is
    pinned to its plant point for the stance part of its cycle and travels to
    the next plant point during swing: it lifts first, moves horizontally,
    then lowers, so a foot never slides while near the ground. Arms swing in
    opposition to the legs.

    Returns:
        The motion and a boolean (N, 2) mask of (left, right) stance frames
    """
    params = params or GaitParams()
    skeleton = skeleton or default_skeleton()
    index = skeleton.joint_index
    t = np.arange(n_frames) / fps
    cycle = 2.0 / params.cadence

    root = np.zeros((n_frames, 3))
    root[:, 0] = params.hip_sway * np.sin(2.0 * np.pi * (t / cycle + params.phase))
    root[:, 1] = params.ground_height + ROOT_CLEARANCE
    root[:, 2] = params.stride * params.cadence * t
    rot = np.zeros((n_frames, skeleton.n_joints, 3))
    offsets = skeleton.offsets

    stance = np.zeros((n_frames, 2), dtype=bool)
    legs = (
        ("left", FOOT_WIDTH, 0.0),
        ("right", -FOOT_WIDTH, RIGHT_FOOT_OFFSET),
    )
    for side, (name, lateral, offset) in enumerate(legs):
        hip_joint = index(f"{name}_hip")
        ankle, stance[:, side] = _foot_track(t, params, lateral, offset)
        hip = root + offsets[hip_joint]
        hip_rot, knee_rot, ankle_rot = _leg_rotations(hip, ankle)
        rot[:, hip_joint] = hip_rot
        rot[:, index(f"{name}_knee")] = knee_rot
        rot[:, index(f"{name}_ankle")] = ankle_rot

    swing = params.arm_swing * np.sin(2.0 * np.pi * (t / cycle + params.phase))
    for name, drop, sign in (("left", -ARM_DROP, 1.0), ("right", ARM_DROP, -1.0)):
        pitch = Rotation.from_rotvec(np.stack([sign * swing, 0 * t, 0 * t], axis=-1))
        down = Rotation.from_rotvec([0.0, 0.0, drop])
        rot[:, index(f"{name}_shoulder")] = (pitch * down).as_rotvec()

    return MotionSequence(root=root, rot=rot, fps=fps), stance


def synth_walk_dataset(
    n: int,
    seed: int = 0,
    ranges: GaitRanges | None = None,
    n_frames: int = DEFAULT_FRAMES,
    fps: float = DEFAULT_FPS,
) -> list[MotionSequence]:
    """`n` walks with parameters drawn uniformly from `ranges`; deterministic per seed."""
    if n < 1:
        raise ValueError("dataset size must be at least 1")
    ranges = ranges or GaitRanges()
    rng = np.random.default_rng(seed)
    return [synth_walk(ranges.sample(rng), n_frames, fps)[0] for _ in range(n)]


# Prior specifications ----------------------------------------------------

_DCT_SPEC = re.compile(r"^dct(?::(?:K=)?(?P<k>\d+))?$")


def parse_prior_spec(text: str) -> PriorSpec:
    """Parse `identity`, `dct`, `dct:K=8`, `dct:8` or `pca:path/to/blob.json`.

    Raises:
        PriorSpecError: For anything else
    """
    text = text.strip()
    if text == "identity":
        return PriorSpec(kind="identity")
    if match := _DCT_SPEC.match(text):
        k = int(match["k"]) if match["k"] else DEFAULT_DCT_COEFFICIENTS
        if k < 1:
            raise PriorSpecError(text, "K must be at least 1")
        return PriorSpec(kind="dct", coefficients=k)
    if text.startswith("pca:") and len(text) > 4:
        return PriorSpec(kind="pca", path=Path(text[4:]))
    raise PriorSpecError(text, "expected identity, dct:K=<n> or pca:<path>")


def build_prior(
    spec: PriorSpec | str,
    n_frames: int,
    skeleton: Skeleton | None = None,
    fps: float = DEFAULT_FPS,
) -> MotionPrior:
    """Instantiate the prior described by `spec` for `n_frames` frames.

    Raises:
        PriorSpecError: If the spec is invalid for this frame count, or a PCA
            blob was trained for a different length or frame rate
    """
    if isinstance(spec, str):
        spec = parse_prior_spec(spec)
    skeleton = skeleton or default_skeleton()
    if spec.kind == "identity":
        return IdentityPrior(n_frames, skeleton, fps)
    if spec.kind == "dct":
        if spec.coefficients > n_frames:
            raise PriorSpecError(str(spec), f"K must not exceed the frame count {n_frames}")
        return DCTPrior(n_frames, spec.coefficients, skeleton, fps)
    prior = PCAPrior.load(spec.path, skeleton)
    if prior.n_frames != n_frames:
        raise PriorSpecError(str(spec), f"trained for {prior.n_frames} frames, not {n_frames}")
    if prior.fps != fps:
        raise UserError(f"PCA prior {spec.path} was trained at {prior.fps} fps, not {fps}")
    return prior
