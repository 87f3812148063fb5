"""Shared helpers for the moproc CLI."""

import re
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

import typer

from moproc.configuration.defaults import LOG_LEVEL_ENV_VAR
from moproc.configuration.models import ParamValue
from moproc.errors import MoprocError, UserError
from moproc.logging import setup_logging
from moproc.tasks import TaskSpec, adhoc_task, get_task

LOG_LEVEL_HELP = f"Set logging level (DEBUG, INFO, WARNING, ERROR)\n\n[env: {LOG_LEVEL_ENV_VAR}=]"

_SEED_RANGE = re.compile(r"^(?P<start>\d+)\.\.(?P<stop>\d+)$")


def configure_log_level(log_level: str | None) -> None:
    if log_level:
        setup_logging(log_level)


@contextmanager
def exit_on_error() -> Iterator[None]:
    """Turn moproc errors into a message on stderr and their exit code."""
    try:
        yield
    except MoprocError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(e.exit_code) from None


def parse_seeds(seeds: str | None, seed: int | None) -> list[int]:
    """Seeds from `--seeds a..b` (inclusive) or `--seeds 1,4,7`, else `--seed`.

    Raises:
        UserError: For malformed or empty seed lists, or both flags at once
    """
    if seeds is None:
        return [seed if seed is not None else 0]
    if seed is not None:
        raise UserError("give either --seed or --seeds, not both")
    if match := _SEED_RANGE.match(seeds.strip()):
        start, stop = int(match["start"]), int(match["stop"])
        if start > stop:
            raise UserError(f"empty seed range {seeds}")
        return list(range(start, stop + 1))
    try:
        values = [int(part) for part in seeds.split(",") if part.strip()]
    except ValueError:
        raise UserError(f"invalid --seeds '{seeds}'; use a..b or a comma list") from None
    if not values or any(v < 0 for v in values):
        raise UserError(f"invalid --seeds '{seeds}'")
    return values


def parse_params(items: list[str] | None) -> dict[str, ParamValue]:
    """`--param name=value` pairs; vectors as `x,y,z` or `(x, y, z)`."""
    params: dict[str, ParamValue] = {}
    for item in items or []:
        name, sep, text = item.partition("=")
        name = name.strip()
        if not sep or not name:
            raise UserError(f"invalid --param '{item}'; expected name=value")
        parts = [p for p in text.strip().strip("()").split(",") if p.strip()]
        try:
            values = [float(p) for p in parts]
        except ValueError:
            raise UserError(f"invalid value for parameter '{name}': {text}") from None
        if len(values) == 1:
            params[name] = values[0]
        elif len(values) == 3:
            params[name] = values
        else:
            raise UserError(f"parameter '{name}' needs one number or three, got {len(values)}")
    return params


def resolve_task(task_id: str | None, program: Path | None) -> TaskSpec:
    """The corpus task or the program file named on the command line."""
    if (task_id is None) == (program is None):
        raise UserError("give exactly one of --task or a program path")
    if task_id is not None:
        return get_task(task_id)
    assert program is not None
    if not program.exists():
        raise UserError(f"Program file not found: {program}")
    return adhoc_task(program.read_text(), path=program)
