"""List-tasks command."""

import json

import typer

from moproc.app.utils import exit_on_error
from moproc.console import stdout_console, tasks_table
from moproc.tasks import get_task, list_tasks as corpus_ids


def list_tasks(
    as_json: bool = typer.Option(False, "--json", help="Print ids, summaries and defaults as JSON"),
) -> None:
    """List the tasks of the corpus (shipped tasks plus $MOPROC_CORPUS)."""
    with exit_on_error():
        tasks = [get_task(task_id) for task_id in corpus_ids()]
    if as_json:
        payload = [
            {
                "id": task.id,
                "summary": task.summary,
                "frames": task.frames,
                "relax": task.relax.variant,
                "formulas": task.formulas,
                "params": task.default_params,
            }
            for task in tasks
        ]
        typer.echo(json.dumps(payload, indent=2))
        return
    stdout_console.print(tasks_table(tasks))
