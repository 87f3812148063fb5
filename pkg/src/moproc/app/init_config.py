"""Init-config command: write optimizer defaults to a TOML file."""

from pathlib import Path

import typer
from rich.console import Console
from rich.markup import escape

from moproc.app.utils import exit_on_error
from moproc.configuration.models import OptimConfig
from moproc.configuration.resolver import USER_CONFIG_TABLE, write_user_config

console = Console()


def init_config(
    path: Path = typer.Argument(Path("moproc.toml"), help="TOML file to create or extend"),
) -> None:
    """Write the default optimizer settings into an [optim] table.

    Keys already present in the file are kept; pass the file to `run --config`.
    """
    with exit_on_error():
        skipped = write_user_config(path, OptimConfig())
    if skipped:
        console.print(f"[yellow]{escape(skipped)}[/yellow]")
        return
    console.print(f"[green]✓[/green] Wrote \\[{USER_CONFIG_TABLE}] defaults to {path}")
