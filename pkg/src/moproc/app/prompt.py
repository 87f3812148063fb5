"""Prompt command: print the programming prompt for a language model."""

from pathlib import Path
from typing import Optional

import typer

from moproc.app.utils import exit_on_error
from moproc.errors import UserError
from moproc.templating import render_prompt


def cmd_prompt(description: str = "") -> str:
    return render_prompt(description)


def prompt(
    description: str = typer.Argument("", help="Plain-language description of the motion"),
    file: Optional[Path] = typer.Option(None, "--file", "-f", help="Read the description from a file"),
) -> None:
    """Print instructions, grammar and function catalog for writing a program with an LLM.

    Paste the program that comes back into a file and run it with
    `moproc run --program <file>`.
    """
    with exit_on_error():
        if file is not None:
            if description:
                raise UserError("give the description as an argument or with --file, not both")
            if not file.exists():
                raise UserError(f"Description file not found: {file}")
            description = file.read_text()
        typer.echo(cmd_prompt(description), nl=False)
