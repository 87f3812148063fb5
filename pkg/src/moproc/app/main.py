"""Command-line interface for moproc.

This module implements the `moproc` CLI entry point and command registration.
"""

from typing import Optional

import typer

import moproc
from moproc.app.evaluate import eval_
from moproc.app.gradcheck import gradcheck
from moproc.app.init_config import init_config
from moproc.app.list_tasks import list_tasks
from moproc.app.pca_train import pca_train
from moproc.app.prompt import prompt
from moproc.app.run import run

app = typer.Typer(pretty_exceptions_show_locals=False)

app.command(no_args_is_help=True)(run)
app.command(name="eval", no_args_is_help=True)(eval_)
app.command()(gradcheck)
app.command()(prompt)
app.command(name="list-tasks")(list_tasks)
app.command(name="pca-train")(pca_train)
app.command(name="init-config")(init_config)


def _version_callback(show: bool) -> None:
    """Typer callback to display version and exit.

    Args:
        show: Boolean flag set by --version option
    """
    if show:
        typer.echo(f"{moproc.__version__}")
        raise typer.Exit()


@app.callback(no_args_is_help=True)
def main_info(
    version: Optional[bool] = typer.Option(None, "--version", callback=_version_callback, is_eager=True),
) -> None:
    """Motion from constraint programs: write constraints, optimize motions."""
    pass
