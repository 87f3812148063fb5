"""End-to-end properties of the toolkit.

Sweeps over 20 seeds are marked `slow` and deselected by default; run them
with `pytest -m slow`.
"""

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from moproc import atoms
from moproc.app.gradcheck import cmd_gradcheck, random_motion
from moproc.atoms import SupportRegion
from moproc.configuration.models import OptimConfig
from moproc.kinematics import forward_kinematics, rest_motion
from moproc.metrics import (
    bone_length_incorrect_ratio,
    constraint_error,
    foot_skate_ratio,
    max_acceleration,
)
from moproc.optimizer import ik_baseline, optimize, restart_search
from moproc.priors import DCTPrior
from moproc.relaxation import relax_and_minimize
from moproc.tasks import get_task, list_tasks

SWEEP_SEEDS = range(20)


def brute_force_foot_skate(pos, feet, fps, h_thresh=0.05, v_thresh=0.5):
    skating = 0
    for t in range(len(pos) - 1):
        for j in feet:
            dx = pos[t + 1, j, 0] - pos[t, j, 0]
            dz = pos[t + 1, j, 2] - pos[t, j, 2]
            if pos[t, j, 1] < h_thresh and np.hypot(dx, dz) * fps > v_thresh:
                skating += 1
                break
    return skating / (len(pos) - 1)


def brute_force_max_acceleration(pos, fps):
    worst = 0.0
    for t in range(len(pos) - 2):
        for j in range(pos.shape[1]):
            worst = max(worst, float(np.linalg.norm(pos[t + 2, j] - 2.0 * pos[t + 1, j] + pos[t, j])))
    return worst * fps**2


def brute_force_bone_ratio(pos, skeleton, tolerance=0.025):
    child = skeleton.head_joint
    parent = skeleton.parents[child]
    template = float(np.linalg.norm(skeleton.offsets[child]))
    outside = sum(
        abs(float(np.linalg.norm(pos[t, child] - pos[t, parent])) - template) > tolerance for t in range(len(pos))
    )
    return outside / len(pos)


class TestGradients:
    """Reverse-mode gradients of every shipped program."""

    @pytest.mark.parametrize("task_id", list_tasks())
    def test_task_program(self, task_id):
        report = cmd_gradcheck(get_task(task_id), motions=3, seed=1, coords=24, frames=8)
        assert report.max_rel_error < 1e-4

    @pytest.mark.slow
    @pytest.mark.parametrize("task_id", list_tasks())
    def test_task_program_full_sweep(self, task_id):
        report = cmd_gradcheck(get_task(task_id), motions=100, seed=0, coords=64, frames=16)
        assert report.max_rel_error < 1e-4


class TestMetricOracles:
    """Vectorized metrics against frame-by-frame scans."""

    def test_random_motions(self, skeleton):
        rng = np.random.default_rng(11)
        for _ in range(50):
            motion = random_motion(skeleton, 12, rng)
            pos = forward_kinematics(skeleton, motion).values()
            feet = skeleton.foot_joints
            assert foot_skate_ratio(pos, feet, 20.0) == brute_force_foot_skate(pos, feet, 20.0)
            assert max_acceleration(pos, 20.0) == pytest.approx(brute_force_max_acceleration(pos, 20.0), rel=1e-12)
            assert bone_length_incorrect_ratio(pos, skeleton) == brute_force_bone_ratio(pos, skeleton)

    def test_corrupted_neck(self, skeleton, standing):
        pos = forward_kinematics(skeleton, standing).values().copy()
        pos[:, skeleton.head_joint, 1] += 0.05
        assert bone_length_incorrect_ratio(pos, skeleton) == 1.0

    def test_optimizer_output_keeps_bone_lengths(self, skeleton):
        task = get_task("HSI-2")
        result = optimize(DCTPrior(16, 4, skeleton), task.program, config=OptimConfig(steps=20))
        assert bone_length_incorrect_ratio(forward_kinematics(skeleton, result.motion), skeleton) == 0.0


class TestLogicSemantics:
    """Comparison and logical operators over random errors and margins."""

    def test_formulas(self):
        rng = np.random.default_rng(5)
        e = rng.uniform(-2.0, 2.0, 10_000)
        margin = rng.uniform(-2.0, 2.0, 10_000)
        lt = atoms.lt(e, margin)
        gt = atoms.gt(e, margin)
        np.testing.assert_array_equal(lt, np.maximum(e - margin, 0.0))
        np.testing.assert_array_equal(gt, np.maximum(margin - e, 0.0))
        np.testing.assert_array_equal(lt * gt, 0.0)
        a, b = np.abs(e), np.abs(margin)
        np.testing.assert_array_equal(atoms.and_(a, b), a + b)
        np.testing.assert_array_equal(atoms.or_(a, b), np.minimum(a, b))


class TestRestartSearch:
    """Best-of-five never loses to best-of-one on nested seeds."""

    def test_nested_seeds(self, skeleton):
        task = get_task("HSI-1")
        prior = DCTPrior(10, 3, skeleton)
        for trial in range(20):
            one = restart_search(prior, task.program, config=OptimConfig(steps=5, seed=trial))
            five = restart_search(prior, task.program, config=OptimConfig(steps=5, seed=trial, restarts=5))
            assert five.constraint_error <= one.constraint_error


@pytest.mark.slow
class TestDeskScale:
    """Directional reproductions over 20 seeds at the default settings."""

    def test_keyframe_heights(self, skeleton):
        task = get_task("HSI-1")
        prior = DCTPrior(60, 8, skeleton)
        hits = 0
        for seed in SWEEP_SEEDS:
            result = optimize(prior, task.program, seed=seed)
            assert result.wall_time < 10.0
            hits += constraint_error(task, result.motion) < 0.02
        assert hits >= 18

    def test_relaxation_helps_on_the_wall(self, skeleton):
        task = get_task("GEO-1")
        prior = DCTPrior(60, 8, skeleton)
        wins = 0
        for seed in SWEEP_SEEDS:
            config = OptimConfig(seed=seed)
            relaxed = relax_and_minimize(prior, task.program, task.relax, config=config)
            plain = restart_search(prior, task.program, config=config)
            wins += constraint_error(task, relaxed.motion) <= constraint_error(task, plain.motion)
        assert wins >= 16

    def test_ik_is_jerkier_than_the_prior(self, skeleton):
        task = get_task("HSI-1")
        prior = DCTPrior(60, 8, skeleton)
        initial = rest_motion(skeleton, 60)

        def jerk(motion):
            return max_acceleration(forward_kinematics(skeleton, motion), 20.0)

        prior_wins = reg_wins = 0
        for seed in SWEEP_SEEDS:
            config = OptimConfig(seed=seed)
            latent = jerk(optimize(prior, task.program, config=config, seed=seed).motion)
            plain = jerk(ik_baseline(task.program, initial, 0.0, config=config).motion)
            regularized = jerk(ik_baseline(task.program, initial, 1.0, config=config).motion)
            prior_wins += plain > latent
            reg_wins += regularized < plain
        assert prior_wins >= 16
        assert reg_wins >= 16

    def test_balance_keeps_com_over_the_stance_foot(self, skeleton):
        task = get_task("PBG-1")
        stance = [skeleton.joint_index(name) for name in task.metadata.support]
        prior = DCTPrior(60, 8, skeleton)
        rim = SupportRegion(np.zeros((1, 3))).rim_offsets()
        balanced = 0
        for seed in SWEEP_SEEDS:
            motion = optimize(prior, task.program, seed=seed).motion
            pos = forward_kinematics(skeleton, motion).values()
            com = atoms.center_of_mass(skeleton, pos)[:, [0, 2]]
            inside = True
            for t in range(len(pos)):
                points = (pos[t, stance][:, None, [0, 2]] + rim[None]).reshape(-1, 2)
                hull = ConvexHull(points)
                inside &= bool(np.all(hull.equations[:, :2] @ com[t] + hull.equations[:, 2] <= 1e-9))
            balanced += inside
        assert balanced >= 16
