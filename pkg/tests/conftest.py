"""Shared fixtures and test utilities for moproc tests."""

import os
import re

import numpy as np
import pytest

from moproc.app.gradcheck import random_motion
from moproc.configuration.defaults import CORPUS_ENV_VAR
from moproc.kinematics import MotionSequence, default_skeleton, rest_motion


@pytest.fixture(scope="session", autouse=True)
def configure_rich_for_ci():
    """Configure Rich/Typer for consistent output in CI environments.

    Sets TTY_COMPATIBLE=1 and TTY_INTERACTIVE=0 to get plain text output
    without ANSI escape codes, and turns the optimization progress bar off.
    """
    os.environ["TTY_COMPATIBLE"] = "1"
    os.environ["TTY_INTERACTIVE"] = "0"
    os.environ["MOPROC_NO_PROGRESS"] = "1"
    yield
    os.environ.pop("TTY_COMPATIBLE", None)
    os.environ.pop("TTY_INTERACTIVE", None)
    os.environ.pop("MOPROC_NO_PROGRESS", None)


@pytest.fixture(autouse=True)
def shipped_corpus_only(monkeypatch):
    """Tests see the shipped corpus unless they point MOPROC_CORPUS elsewhere."""
    monkeypatch.delenv(CORPUS_ENV_VAR, raising=False)


def strip_ansi(text: str) -> str:
    """Remove ANSI escape codes from text."""
    return re.sub(r"\x1b\[[0-9;]*m", "", text)


@pytest.fixture
def skeleton():
    return default_skeleton()


@pytest.fixture
def standing(skeleton):
    """A 20-frame motionless T-pose, toes 2 cm above the ground."""
    return rest_motion(skeleton, 20)


@pytest.fixture
def random_motions(skeleton):
    """Factory for seeded random motions around the standing pose."""

    def make(count: int, n_frames: int = 12, seed: int = 0) -> list[MotionSequence]:
        rng = np.random.default_rng(seed)
        return [random_motion(skeleton, n_frames, rng) for _ in range(count)]

    return make


def translated(motion: MotionSequence, offsets: np.ndarray) -> MotionSequence:
    """`motion` with a per-frame root translation added."""
    root = np.asarray(motion.root) + np.asarray(offsets, dtype=float)
    return MotionSequence(root=root, rot=np.asarray(motion.rot).copy(), fps=motion.fps)
