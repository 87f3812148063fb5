import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from moproc.configuration.defaults import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPSILON,
    DEFAULT_DCT_COEFFICIENTS,
    DEFAULT_FAST_MAX_LEARNING_RATE,
    DEFAULT_FRAMES,
    DEFAULT_LEARNING_RATE,
    DEFAULT_RELAX_INTERVAL,
    DEFAULT_RESTARTS,
    DEFAULT_STEPS,
)


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class OptimConfig(BaseModel, extra="forbid"):
    """Settings of one latent optimization run.

    Attributes:
        lr: Adam learning rate (final rate in fast mode)
        steps: Number of optimization steps
        max_lr: Initial learning rate in fast mode
        fast: Decay the learning rate linearly from `max_lr` to `lr`
        restarts: Number of independent initial points (seeds seed..seed+restarts-1)
        relax_interval: Steps between constraint refits when relaxing
        beta1: Adam first-moment decay
        beta2: Adam second-moment decay
        eps: Adam denominator offset
        seed: Base random seed
        workers: Threads used for restarts and seed sweeps
    """

    lr: float = Field(default=DEFAULT_LEARNING_RATE, gt=0)
    steps: int = Field(default=DEFAULT_STEPS, ge=1)
    max_lr: float = Field(default=DEFAULT_FAST_MAX_LEARNING_RATE, gt=0)
    fast: bool = False
    restarts: int = Field(default=DEFAULT_RESTARTS, ge=1)
    relax_interval: int = Field(default=DEFAULT_RELAX_INTERVAL, ge=1)
    beta1: float = Field(default=ADAM_BETA1, ge=0, lt=1)
    beta2: float = Field(default=ADAM_BETA2, ge=0, lt=1)
    eps: float = Field(default=ADAM_EPSILON, gt=0)
    seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)

    def learning_rate(self, step: int) -> float:
        """Learning rate used at `step` (0-based)."""
        if not self.fast or self.steps == 1:
            return self.lr
        fraction = step / (self.steps - 1)
        return self.max_lr + (self.lr - self.max_lr) * fraction


RelaxVariant = Literal["none", "plane_fit", "line_fit", "endpoint_pair"]

RELAX_ALIASES: dict[str, RelaxVariant] = {
    "none": "none",
    "plane": "plane_fit",
    "line": "line_fit",
    "endpoints": "endpoint_pair",
}


class RelaxSpec(BaseModel):
    """Which constraint parameters a relax-and-minimize loop refits.

    `joints` name the trajectories the fit uses. `params` name the program
    parameters that are rewritten: (normal, offset) for a plane, (origin,
    direction) for a line and (A, B) for an endpoint pair.
    """

    model_config = ConfigDict(frozen=True)

    variant: RelaxVariant = "none"
    joints: tuple[str, ...] = ()
    params: tuple[str, ...] = ()

    @model_validator(mode="after")
    def _check_arity(self) -> "RelaxSpec":
        if self.variant == "none":
            return self
        if len(self.params) != 2:
            raise ValueError(f"{self.variant} needs exactly two parameter names")
        if not self.joints:
            raise ValueError(f"{self.variant} needs at least one joint")
        if self.variant == "endpoint_pair" and len(self.joints) != 1:
            raise ValueError("endpoint_pair relaxes exactly one joint")
        return self

    @property
    def enabled(self) -> bool:
        return self.variant != "none"


PriorKind = Literal["identity", "dct", "pca"]


class PriorSpec(BaseModel):
    """A parsed `--prior` value: `identity`, `dct:K=8` or `pca:path`."""

    model_config = ConfigDict(frozen=True)

    kind: PriorKind
    coefficients: int = Field(default=DEFAULT_DCT_COEFFICIENTS, ge=1)
    path: Path | None = None

    @model_validator(mode="after")
    def _check_path(self) -> "PriorSpec":
        if self.kind == "pca" and self.path is None:
            raise ValueError("pca prior needs a blob path")
        return self

    def __str__(self) -> str:
        if self.kind == "dct":
            return f"dct:K={self.coefficients}"
        if self.kind == "pca":
            return f"pca:{self.path}"
        return "identity"


class GaitParams(BaseModel):
    """Parameters of one procedural walk.

    Attributes:
        stride: Step length in meters
        cadence: Steps per second
        hip_sway: Lateral pelvis sway amplitude in meters
        arm_swing: Arm swing amplitude in radians
        ground_height: Height of the walking surface in meters
        step_height: Peak ankle lift during swing in meters
        phase: Starting point in the gait cycle, as a fraction of one cycle
    """

    stride: float = Field(default=0.35, ge=0, le=0.45)
    cadence: float = Field(default=1.8, gt=0)
    hip_sway: float = Field(default=0.02, ge=0)
    arm_swing: float = Field(default=0.3, ge=0)
    ground_height: float = 0.0
    step_height: float = Field(default=0.08, gt=0)
    phase: float = Field(default=0.0, ge=0, lt=1)


class GaitRanges(BaseModel):
    """Uniform sampling ranges for `synth_walk_dataset`."""

    stride: tuple[float, float] = (0.0, 0.45)
    cadence: tuple[float, float] = (1.4, 2.2)
    hip_sway: tuple[float, float] = (0.0, 0.04)
    arm_swing: tuple[float, float] = (0.1, 0.5)
    ground_height: tuple[float, float] = (0.0, 0.0)
    phase: tuple[float, float] = (0.0, 0.99)

    @field_validator("stride", "cadence", "hip_sway", "arm_swing", "ground_height", "phase")
    @classmethod
    def _ordered(cls, value: tuple[float, float]) -> tuple[float, float]:
        low, high = value
        if low > high:
            raise ValueError(f"range lower bound {low} exceeds upper bound {high}")
        return value

    def sample(self, rng: np.random.Generator) -> GaitParams:
        values = {
            name: float(rng.uniform(*getattr(self, name)))
            for name in ("stride", "cadence", "hip_sway", "arm_swing", "ground_height", "phase")
        }
        return GaitParams(**values)


class TaskMetadata(BaseModel, extra="forbid"):
    """Per-task entry of `tasks.toml`.

    Attributes:
        summary: One-line description
        doc: Longer notes (defaults chosen, modeling decisions)
        frames: Default motion length
        relax: Relaxation used unless overridden
        formulas: Constraint-error formula ids; C.Err is their mean
        support: Stance joints of the `com` formula (default: both feet)
        config: Partial `OptimConfig` overrides for this task
    """

    summary: str = ""
    doc: str = ""
    frames: int = Field(default=DEFAULT_FRAMES, ge=2)
    relax: RelaxSpec = Field(default_factory=RelaxSpec)
    formulas: list[str] = Field(default_factory=list)
    support: list[str] = Field(default_factory=list)
    config: dict[str, Any] = Field(default_factory=dict)


class MetricsReport(BaseModel):
    """Motion quality and constraint satisfaction of one sample."""

    sample: str = ""
    foot_skate_ratio: float = Field(ge=0, le=1)
    max_acceleration: float = Field(ge=0)
    constraint_error: float = Field(ge=0)
    success: bool
    bone_length_incorrect_ratio: float = Field(ge=0, le=1)

    @model_validator(mode="after")
    def _check_finite(self) -> "MetricsReport":
        for name in ("foot_skate_ratio", "max_acceleration", "constraint_error", "bone_length_incorrect_ratio"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        return self


ParamValue = float | list[float]


class RunRequest(BaseModel):
    """Everything `moproc run` needs; exactly one of `task` / `program`."""

    task: str | None = None
    program: Path | None = None
    prior: str = f"dct:K={DEFAULT_DCT_COEFFICIENTS}"
    overrides: dict[str, Any] = Field(default_factory=dict)
    config_path: Path | None = None
    out: Path = Path("runs")
    seeds: list[int] = Field(default_factory=lambda: [0])
    relax: str | None = None
    params: dict[str, ParamValue] = Field(default_factory=dict)
    text: str | None = None
    frames: int | None = Field(default=None, ge=2)
    fps: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _exactly_one_source(self) -> "RunRequest":
        if (self.task is None) == (self.program is None):
            raise ValueError("give exactly one of --task or --program")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        return self


class RunManifest(BaseModel):
    """Provenance of one run, written next to its motion as manifest.json."""

    version: int = 1
    task: str
    program_hash: str
    program: str
    prior: str
    seed: int
    config: OptimConfig
    relax: RelaxSpec
    params: dict[str, ParamValue] = Field(default_factory=dict)
    text: str | None = None
    frames: int
    fps: float
    skeleton: str
    restart: int
    final_error: float
    wall_time: float
    metrics: MetricsReport
    moproc_version: str = ""
    created: str = Field(default_factory=_utc_now)


class FrameDocument(BaseModel):
    root: tuple[float, float, float]
    rot: list[tuple[float, float, float]]


class MotionDocument(BaseModel):
    """On-disk motion JSON: fps, skeleton id (or inline skeleton) and frames."""

    fps: float = Field(gt=0)
    skeleton: str | dict[str, Any] = "default22"
    frames: list[FrameDocument] = Field(min_length=2)
    meta: dict[str, Any] | None = None


class PCABlob(BaseModel):
    """Serialized PCA prior."""

    version: int = 1
    mean: list[float]
    basis: list[list[float]]
    scale: list[float]
    dims: int = Field(ge=1)
    fps: float = Field(gt=0)
    skeleton: str
    n_frames: int = Field(ge=2)

    @model_validator(mode="after")
    def _check_shapes(self) -> "PCABlob":
        if len(self.mean) != self.dims:
            raise ValueError("mean length does not match dims")
        if len(self.basis) != len(self.scale):
            raise ValueError("basis and scale disagree on the latent size")
        if any(len(row) != self.dims for row in self.basis):
            raise ValueError("basis rows must have length dims")
        return self
