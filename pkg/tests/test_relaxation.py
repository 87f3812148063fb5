"""Tests for refitting constraint geometry and mapping motions back."""

import numpy as np
import pytest

from moproc.configuration.models import OptimConfig, RelaxSpec
from moproc.errors import UserError
from moproc.kinematics import forward_kinematics, yaw_translate_points
from moproc.priors import DCTPrior
from moproc.relaxation import (
    Relaxation,
    fit_horizontal_line,
    fit_vertical_plane,
    relax_and_minimize,
    relax_endpoints,
    resolve_relax,
)
from moproc.tasks import get_task
from tests.conftest import translated

PIVOT = np.array([0.0, 0.95, 0.0])
SQRT2 = np.sqrt(2.0)


@pytest.fixture
def walking(standing):
    """The standing pose carried 5 cm along +z per frame."""
    return translated(standing, np.outer(np.arange(20) * 0.05, [0.0, 0.0, 1.0]))


class TestFits:
    """Least-squares plane, line and endpoint fits."""

    def test_vertical_plane(self):
        points = np.array([[0.7, 1.0, 0.0], [0.7, 1.2, 1.0], [0.7, 0.9, 2.0]])
        normal, offset = fit_vertical_plane(points, [1.0, 0.0, 0.0])
        np.testing.assert_allclose(normal, [1.0, 0.0, 0.0], atol=1e-12)
        assert offset == pytest.approx(0.7)

    def test_plane_normal_follows_reference(self):
        points = np.array([[0.7, 1.0, 0.0], [0.7, 1.0, 1.0]])
        normal, offset = fit_vertical_plane(points, [-1.0, 0.0, 0.0])
        np.testing.assert_allclose(normal, [-1.0, 0.0, 0.0], atol=1e-12)
        assert offset == pytest.approx(-0.7)

    def test_horizontal_line(self):
        points = np.array([[0.0, 0.0, 0.3], [1.0, 0.1, 0.3], [2.0, 0.0, 0.3]])
        origin, direction = fit_horizontal_line(points, [0.0, 0.02, 0.0], [-1.0, 0.0, 0.0])
        np.testing.assert_allclose(origin, [1.0, 0.02, 0.3], atol=1e-12)
        np.testing.assert_allclose(direction, [-1.0, 0.0, 0.0], atol=1e-12)

    def test_endpoints_keep_original_separation(self):
        a, b = relax_endpoints([0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [1.0, 0.8, 1.0], [-1.0, 0.8, -1.0])
        np.testing.assert_allclose(a, [1.0 - SQRT2, 0.8, 0.0])
        np.testing.assert_allclose(b, [1.0 + SQRT2, 0.8, 0.0])

    @pytest.mark.parametrize(
        "fit",
        [
            lambda p: fit_vertical_plane(p, [1.0, 0.0, 0.0]),
            lambda p: fit_horizontal_line(p, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            lambda p: relax_endpoints(p[0], p[1], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
        ],
    )
    def test_coincident_points_are_degenerate(self, fit):
        assert fit(np.tile([0.3, 1.0, -0.2], (4, 1))) is None


class TestTransform:
    """The rigid map from relaxed geometry onto the original."""

    def test_plane(self):
        relax = Relaxation(get_task("GEO-1").relax, get_task("GEO-1").program)
        relaxed = {"normal": np.array([0.0, 0.0, 1.0]), "offset": 0.69}
        dx, dz, dyaw = relax.transform(relaxed, relax.original, PIVOT)
        assert dyaw == pytest.approx(np.pi / 2)
        on_relaxed = np.array([[-1.0, 1.0, 0.69], [2.0, 0.3, 0.69]])
        moved = yaw_translate_points(on_relaxed, PIVOT, dx, dz, dyaw)
        np.testing.assert_allclose(moved[:, 0], 0.5, atol=1e-12)

    def test_line(self):
        relax = Relaxation(get_task("GEO-2").relax, get_task("GEO-2").program)
        relaxed = {"origin": np.array([1.0, 0.02, 0.3]), "direction": np.array([0.0, 0.0, 1.0])}
        dx, dz, dyaw = relax.transform(relaxed, relax.original, PIVOT)
        on_relaxed = np.array([[1.0, 0.02, -2.0], [1.0, 0.02, 0.3], [1.0, 0.02, 4.0]])
        moved = yaw_translate_points(on_relaxed, PIVOT, dx, dz, dyaw)
        np.testing.assert_allclose(moved[:, 2], 0.0, atol=1e-12)

    def test_endpoints(self):
        relax = Relaxation(get_task("HOI-1").relax, get_task("HOI-1").program)
        relaxed = {"A": np.array([1.0 - SQRT2, 0.8, 0.0]), "B": np.array([1.0 + SQRT2, 0.8, 0.0])}
        dx, dz, dyaw = relax.transform(relaxed, relax.original, PIVOT)
        moved = yaw_translate_points(np.stack([relaxed["A"], relaxed["B"]]), PIVOT, dx, dz, dyaw)
        np.testing.assert_allclose(moved, [[1.0, 0.8, 1.0], [-1.0, 0.8, -1.0]], atol=1e-12)


class TestRelaxation:
    """Refitting during a run and mapping the result back."""

    def test_refit_plane_to_walking_hand(self, walking):
        task = get_task("GEO-1")
        relax = Relaxation(task.relax, task.program)
        updated = relax.refit(walking, task.default_params)
        np.testing.assert_allclose(updated["normal"], [1.0, 0.0, 0.0], atol=1e-9)
        assert updated["offset"] == pytest.approx(0.69)

    def test_refit_endpoints(self, walking):
        task = get_task("HOI-1")
        relax = Relaxation(task.relax, task.program)
        updated = relax.refit(walking, task.default_params)
        np.testing.assert_allclose(updated["A"], [0.69, 0.8, 0.475 - SQRT2], atol=1e-9)
        np.testing.assert_allclose(updated["B"], [0.69, 0.8, 0.475 + SQRT2], atol=1e-9)

    def test_degenerate_refit_keeps_parameters(self, standing):
        task = get_task("GEO-1")
        params = task.default_params
        assert Relaxation(task.relax, task.program).refit(standing, params) == params

    def test_map_back_lands_on_the_original_wall(self, skeleton, walking):
        task = get_task("GEO-1")
        relax = Relaxation(task.relax, task.program)
        mapped = relax.map_back(walking, relax.refit(walking, task.default_params))
        hand = forward_kinematics(skeleton, mapped).values()[:, skeleton.left_hand_joint]
        np.testing.assert_allclose(hand[:, 0], 0.5, atol=1e-9)
        assert task.program.evaluate(mapped).value == pytest.approx(0.0, abs=1e-9)

    def test_disabled_spec(self):
        with pytest.raises(ValueError, match="other than 'none'"):
            Relaxation(RelaxSpec(), get_task("GEO-1").program)

    def test_unknown_joint(self):
        spec = RelaxSpec(variant="plane_fit", joints=("tail",), params=("normal", "offset"))
        with pytest.raises(UserError, match="unknown joint"):
            Relaxation(spec, get_task("GEO-1").program)

    def test_undeclared_parameter(self):
        spec = RelaxSpec(variant="plane_fit", joints=("left_hand",), params=("n", "offset"))
        with pytest.raises(UserError, match="does not declare"):
            Relaxation(spec, get_task("GEO-1").program)

    def test_parameter_kind(self):
        spec = RelaxSpec(variant="plane_fit", joints=("left_hand",), params=("offset", "normal"))
        with pytest.raises(UserError, match="must be a vec3"):
            Relaxation(spec, get_task("GEO-1").program)

    def test_spec_arity(self):
        with pytest.raises(ValueError, match="exactly one joint"):
            RelaxSpec(variant="endpoint_pair", joints=("left_hand", "head"), params=("A", "B"))

    def test_relaxed_run_scores_against_original(self, skeleton):
        task = get_task("GEO-1")
        config = OptimConfig(lr=0.05, steps=10, relax_interval=5)
        result = relax_and_minimize(DCTPrior(20, 4, skeleton), task.program, task.relax, config=config)
        assert set(result.relaxed_params) == {"normal", "offset"}
        assert result.final_error == pytest.approx(task.program.evaluate(result.motion).value)


class TestResolveRelax:
    """Combining `--relax` with a task default."""

    def test_choices(self):
        default = get_task("GEO-1").relax
        assert resolve_relax(None, default) == default
        assert resolve_relax("plane", default) == default
        assert not resolve_relax("none", default).enabled

    def test_mismatched_variant(self):
        with pytest.raises(UserError, match="supports relaxation 'plane_fit'"):
            resolve_relax("line", get_task("GEO-1").relax)

    def test_task_without_relaxation(self):
        with pytest.raises(UserError, match="'none'"):
            resolve_relax("plane", get_task("HSI-1").relax)

    def test_unknown_choice(self):
        with pytest.raises(UserError, match="Unknown relaxation"):
            resolve_relax("twist", RelaxSpec())
