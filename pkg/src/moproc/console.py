"""Console display: metric and task tables, optimization progress."""

import os
from contextlib import contextmanager
from typing import Iterator, Sequence

from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn
from rich.table import Table
from rich.text import Text

from moproc.configuration.models import MetricsReport
from moproc.optimizer import Progress as ProgressCallback
from moproc.tasks import TaskSpec

stdout_console = Console()
stderr_console = Console(stderr=True)


def _progress_allowed() -> bool:
    return stderr_console.is_terminal and not os.environ.get("MOPROC_NO_PROGRESS")


@contextmanager
def optimization_progress(total_steps: int, label: str) -> Iterator[ProgressCallback]:
    """Progress bar on stderr; yields a callback advancing it by n steps.

    The callback is safe to call from restart and seed worker threads.
    """
    progress = Progress(
        TextColumn("[cyan]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        console=stderr_console,
        disable=not _progress_allowed(),
        transient=True,
    )
    with progress:
        task = progress.add_task(label, total=total_steps)
        yield lambda n: progress.advance(task, n)


def format_elapsed(seconds: float) -> str:
    """Format elapsed time in a human-readable way."""
    if seconds < 60:
        return f"{seconds:.1f}s"
    minutes = int(seconds // 60)
    return f"{minutes}m {int(seconds % 60)}s"


def _success(ok: bool) -> Text:
    return Text("yes", style="green") if ok else Text("no", style="red")


def metrics_table(reports: Sequence[MetricsReport], title: str | None = None) -> Table:
    table = Table(title=title)
    table.add_column("Sample", style="cyan")
    table.add_column("Foot Skate", justify="right")
    table.add_column("Max Acc.", justify="right")
    table.add_column("C.Err", justify="right")
    table.add_column("Success", justify="center")
    table.add_column("Bone Incorrect", justify="right")
    for report in reports:
        table.add_row(
            report.sample or "-",
            f"{report.foot_skate_ratio:.3f}",
            f"{report.max_acceleration:.3f}",
            f"{report.constraint_error:.4f}",
            _success(report.success),
            f"{report.bone_length_incorrect_ratio:.3f}",
        )
    return table


def tasks_table(tasks: Sequence[TaskSpec]) -> Table:
    table = Table(title="Tasks")
    table.add_column("ID", style="cyan")
    table.add_column("Summary")
    table.add_column("Relax", style="magenta")
    table.add_column("C.Err formulas", style="dim")
    for task in tasks:
        relax = task.relax.variant if task.relax.enabled else "-"
        table.add_row(task.id, task.summary, relax, ", ".join(task.formulas) or "program error")
    return table
