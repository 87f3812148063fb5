"""Tests for console tables and run plots."""

import pytest
from rich.console import Console

from moproc.configuration.models import MetricsReport
from moproc.console import format_elapsed, metrics_table, optimization_progress, tasks_table
from moproc.kinematics import forward_kinematics
from moproc.plotting import plot_error_trace, plot_joint_heights, plot_root_path
from moproc.tasks import get_task


def render(table) -> str:
    console = Console(width=120, record=True)
    console.print(table)
    return console.export_text()


class TestConsole:
    """Tables and progress display."""

    @pytest.mark.parametrize("seconds,expected", [(4.25, "4.2s"), (59.94, "59.9s"), (125.0, "2m 5s")])
    def test_format_elapsed(self, seconds, expected):
        assert format_elapsed(seconds) == expected

    def test_metrics_table(self):
        report = MetricsReport(
            sample="HSI-1:seed0",
            foot_skate_ratio=0.125,
            max_acceleration=3.5,
            constraint_error=0.0123,
            success=True,
            bone_length_incorrect_ratio=0.0,
        )
        text = render(metrics_table([report]))
        for cell in ("HSI-1:seed0", "0.125", "3.500", "0.0123", "yes"):
            assert cell in text

    def test_tasks_table(self):
        text = render(tasks_table([get_task("GEO-1"), get_task("HSI-1")]))
        assert "plane_fit" in text
        assert "keyframe_height" in text

    def test_progress_callback(self):
        ticks = 0
        with optimization_progress(10, "test") as advance:
            for _ in range(10):
                advance(1)
                ticks += 1
        assert ticks == 10


class TestPlotting:
    """SVG figures written next to a run."""

    def test_plots(self, skeleton, standing, tmp_path):
        pos = forward_kinematics(skeleton, standing)
        plot_root_path(tmp_path / "root.svg", pos)
        plot_joint_heights(tmp_path / "heights.svg", pos, skeleton)
        plot_error_trace(tmp_path / "trace.svg", [1.0, 0.5, 0.25], ["a", "b"], [(0.5, 0.5), (0.25, 0.25), (0.1, 0.15)])
        for name in ("root.svg", "heights.svg", "trace.svg"):
            assert (tmp_path / name).read_text().lstrip().startswith("<?xml")

    def test_trace_with_zero_error(self, tmp_path):
        plot_error_trace(tmp_path / "trace.svg", [0.5, 0.0])
        assert "<svg" in (tmp_path / "trace.svg").read_text()
