"""Reading and writing motions, positions and run manifests.

Motion JSON is the lossless format: `eval` reloads it bit-for-bit, so a run
and its later evaluation see identical floats. BVH and CSV are export-only.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from pydantic import ValidationError
from scipy.spatial.transform import Rotation

from moproc.configuration.models import (
    FrameDocument,
    MotionDocument,
    ParamValue,
    RunManifest,
)
from moproc.errors import MotionFormatError, SkeletonMismatchError, UserError
from moproc.kinematics import MotionSequence, PositionSequence, Skeleton, default_skeleton

logger = logging.getLogger(__name__)

MOTION_FILE = "motion.json"
MANIFEST_FILE = "manifest.json"

# BVH rotation channels; scipy's "ZYX" is the matching intrinsic order
BVH_EULER_ORDER = "ZYX"
BVH_ROTATION_CHANNELS = "Zrotation Yrotation Xrotation"


def params_to_json(params: Mapping[str, Any]) -> dict[str, ParamValue]:
    """Bound parameter arrays as plain floats and lists."""
    out: dict[str, ParamValue] = {}
    for name, value in params.items():
        array = np.asarray(value, dtype=float)
        out[name] = array.tolist() if array.ndim else float(array)
    return out


# -- motion JSON ---------------------------------------------------------------


def motion_to_document(
    motion: MotionSequence, skeleton: Skeleton, meta: dict[str, Any] | None = None
) -> MotionDocument:
    if motion.n_joints != skeleton.n_joints:
        raise SkeletonMismatchError(skeleton.n_joints, motion.n_joints)
    motion = motion.detached()
    root, rot = np.asarray(motion.root), np.asarray(motion.rot)
    frames = [
        FrameDocument(root=tuple(root[t].tolist()), rot=[tuple(r) for r in rot[t].tolist()])
        for t in range(motion.n_frames)
    ]
    stored: str | dict[str, Any] = skeleton.id
    if skeleton.id != default_skeleton().id:
        stored = skeleton.model_dump(mode="json")
    return MotionDocument(fps=motion.fps, skeleton=stored, frames=frames, meta=meta)


def save_motion(
    path: Path, motion: MotionSequence, skeleton: Skeleton, meta: dict[str, Any] | None = None
) -> None:
    Path(path).write_text(motion_to_document(motion, skeleton, meta).model_dump_json(indent=2))
    logger.debug(f"Wrote {motion.n_frames}-frame motion to {path}")


def _document_skeleton(document: MotionDocument, path: Path, skeleton: Skeleton | None) -> Skeleton:
    if isinstance(document.skeleton, dict):
        try:
            return Skeleton.model_validate(document.skeleton)
        except ValidationError as e:
            raise MotionFormatError(str(path), f"invalid inline skeleton: {e}") from None
    expected = skeleton or default_skeleton()
    if document.skeleton != expected.id:
        raise MotionFormatError(
            str(path), f"motion uses skeleton '{document.skeleton}', expected '{expected.id}'"
        )
    return expected


def load_motion(path: Path, skeleton: Skeleton | None = None) -> tuple[MotionSequence, Skeleton]:
    """Read a motion JSON file and the skeleton it was written for.

    Axis-angle rotations come back canonical, with magnitudes in [0, 2*pi).

    Raises:
        MotionFormatError: If the file is missing, not JSON or malformed
        SkeletonMismatchError: If frames disagree with the skeleton's joint count
    """
    path = Path(path)
    try:
        document = MotionDocument.model_validate_json(path.read_text())
    except FileNotFoundError:
        raise MotionFormatError(str(path), "file not found") from None
    except ValidationError as e:
        raise MotionFormatError(str(path), str(e)) from None

    skeleton = _document_skeleton(document, path, skeleton)
    counts = {len(frame.rot) for frame in document.frames}
    if len(counts) != 1:
        raise MotionFormatError(str(path), "frames disagree on the joint count")
    if counts != {skeleton.n_joints}:
        raise SkeletonMismatchError(skeleton.n_joints, counts.pop())

    root = np.array([frame.root for frame in document.frames], dtype=float)
    rot = np.array([frame.rot for frame in document.frames], dtype=float)
    if not (np.isfinite(root).all() and np.isfinite(rot).all()):
        raise MotionFormatError(str(path), "motion values must be finite")
    return MotionSequence(root=root, rot=rot, fps=document.fps).canonicalized(), skeleton


# -- exports -------------------------------------------------------------------


def _bvh_hierarchy(skeleton: Skeleton) -> list[str]:
    children: dict[int, list[int]] = {i: [] for i in range(skeleton.n_joints)}
    for j, parent in enumerate(skeleton.parents):
        if parent is not None:
            children[parent].append(j)

    lines: list[str] = []

    def visit(j: int, depth: int) -> None:
        pad = "  " * depth
        offset = " ".join(f"{c:.6f}" for c in skeleton.offsets[j])
        if skeleton.parents[j] is None:
            lines.append(f"{pad}ROOT {skeleton.names[j]}")
            channels = f"CHANNELS 6 Xposition Yposition Zposition {BVH_ROTATION_CHANNELS}"
        else:
            lines.append(f"{pad}JOINT {skeleton.names[j]}")
            channels = f"CHANNELS 3 {BVH_ROTATION_CHANNELS}"
        lines.extend([f"{pad}{{", f"{pad}  OFFSET {offset}", f"{pad}  {channels}"])
        if not children[j]:
            lines.extend([f"{pad}  End Site", f"{pad}  {{", f"{pad}    OFFSET 0.000000 0.000000 0.000000", f"{pad}  }}"])
        for child in children[j]:
            visit(child, depth + 1)
        lines.append(f"{pad}}}")

    visit(0, 0)
    return lines


def _bvh_order(skeleton: Skeleton) -> list[int]:
    """Joint indices in the depth-first order BVH channels are listed in."""
    order: list[int] = []

    def visit(j: int) -> None:
        order.append(j)
        for child, parent in enumerate(skeleton.parents):
            if parent == j:
                visit(child)

    visit(0)
    return order


def write_bvh(path: Path, motion: MotionSequence, skeleton: Skeleton) -> None:
    """Export `motion` as BVH: meters, local rotations as ZYX Euler degrees."""
    if motion.n_joints != skeleton.n_joints:
        raise SkeletonMismatchError(skeleton.n_joints, motion.n_joints)
    motion = motion.detached()
    root, rot = np.asarray(motion.root), np.asarray(motion.rot)
    n, j = rot.shape[:2]
    euler = Rotation.from_rotvec(rot.reshape(-1, 3)).as_euler(BVH_EULER_ORDER, degrees=True)
    euler = euler.reshape(n, j, 3)[:, _bvh_order(skeleton)]

    lines = ["HIERARCHY", *_bvh_hierarchy(skeleton), "MOTION", f"Frames: {n}", f"Frame Time: {1.0 / motion.fps:.6f}"]
    for t in range(n):
        values = np.concatenate([root[t], euler[t].reshape(-1)])
        lines.append(" ".join(f"{v:.6f}" for v in values))
    Path(path).write_text("\n".join(lines) + "\n")


def write_positions_csv(path: Path, pos: PositionSequence | np.ndarray) -> None:
    """Joint positions, one row per frame, columns j{i}_x, j{i}_y, j{i}_z."""
    values = pos.values() if isinstance(pos, PositionSequence) else np.asarray(pos, dtype=float)
    n, j = values.shape[:2]
    header = [f"j{i}_{axis}" for i in range(j) for axis in "xyz"]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for t in range(n):
            writer.writerow([repr(float(v)) for v in values[t].reshape(-1)])


# -- manifests -----------------------------------------------------------------


def write_manifest(path: Path, manifest: RunManifest) -> None:
    Path(path).write_text(manifest.model_dump_json(indent=2))


def read_manifest(path: Path) -> RunManifest:
    """Read a run manifest.

    Raises:
        UserError: If the file is missing or not a valid manifest
    """
    try:
        return RunManifest.model_validate_json(Path(path).read_text())
    except FileNotFoundError:
        raise UserError(f"Manifest not found: {path}") from None
    except (ValidationError, json.JSONDecodeError) as e:
        raise UserError(f"Invalid manifest {path}: {e}") from None
