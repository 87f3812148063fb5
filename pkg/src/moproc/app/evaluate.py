"""Eval command: score saved motions against their task."""

import json
import logging
from pathlib import Path
from typing import Optional

import typer

from moproc.app.run import sample_name
from moproc.app.utils import LOG_LEVEL_HELP, configure_log_level, exit_on_error, parse_params
from moproc.configuration.models import MetricsReport, ParamValue, RunManifest
from moproc.console import metrics_table, stdout_console
from moproc.errors import SkeletonMismatchError, UnknownTaskError, UserError
from moproc.metrics import evaluate_motion, write_report_csv
from moproc.serialization import MANIFEST_FILE, MOTION_FILE, load_motion, read_manifest
from moproc.tasks import TaskSpec, adhoc_task, get_task

logger = logging.getLogger(__name__)

# JSON files a run directory holds besides motions
NON_MOTION_FILES = {MANIFEST_FILE, "metrics.json"}


def motion_files(target: Path) -> list[Path]:
    """The motion file itself, or every motion JSON below a directory."""
    if target.is_dir():
        files = sorted(p for p in target.rglob("*.json") if p.name not in NON_MOTION_FILES)
        if not files:
            raise UserError(f"No motion files found under {target}")
        return files
    if not target.exists():
        raise UserError(f"Motion file not found: {target}")
    return [target]


def manifest_task(manifest: RunManifest) -> TaskSpec:
    """The corpus task a run used, or its recorded program if the corpus changed."""
    try:
        task = get_task(manifest.task)
    except UnknownTaskError:
        task = None
    if task is not None and task.program.hash == manifest.program_hash:
        return task
    logger.info(f"Using the program stored in the manifest for task '{manifest.task}'")
    return adhoc_task(manifest.program)


def evaluate_file(
    path: Path, task_id: str | None = None, params: dict[str, ParamValue] | None = None
) -> MetricsReport:
    """Metrics of one motion file.

    The task and parameters come from `manifest.json` next to the motion
    when present; `task_id` and `params` override them.

    Raises:
        UserError: If no task can be determined or a file is malformed
    """
    manifest_path = path.parent / MANIFEST_FILE
    manifest = read_manifest(manifest_path) if manifest_path.exists() else None

    if task_id is not None:
        task = get_task(task_id)
    elif manifest is not None:
        task = manifest_task(manifest)
    else:
        raise UserError(f"{path} has no {MANIFEST_FILE} next to it; pass --task")

    merged: dict[str, ParamValue] = {}
    if manifest is not None and task_id in (None, manifest.task):
        merged.update(manifest.params)
    merged.update(params or {})

    motion, skeleton = load_motion(path, task.program.skeleton)
    if skeleton.n_joints != task.program.skeleton.n_joints:
        raise SkeletonMismatchError(task.program.skeleton.n_joints, skeleton.n_joints)

    if manifest is not None and path.name == MOTION_FILE:
        sample = sample_name(manifest.task, manifest.seed)
    else:
        sample = str(path)
    return evaluate_motion(task, motion, task.program.bind({**task.default_params, **merged}), sample=sample)


def cmd_eval(
    target: Path,
    task_id: str | None = None,
    params: dict[str, ParamValue] | None = None,
) -> list[MetricsReport]:
    """Evaluate a motion file, or every motion below a directory."""
    return [evaluate_file(path, task_id, params) for path in motion_files(target)]


def eval_(
    target: Path = typer.Argument(..., help="Motion JSON file or a directory of runs"),
    task: Optional[str] = typer.Option(None, "--task", "-t", help="Task id (default: from manifest.json)"),
    param: Optional[list[str]] = typer.Option(None, "--param", help="Override a task parameter: name=value"),
    as_json: bool = typer.Option(False, "--json", help="Print the report(s) as JSON"),
    csv: Optional[Path] = typer.Option(None, "--csv", help="Also write the reports to this CSV file"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help=LOG_LEVEL_HELP),
) -> None:
    """Compute foot skate, max acceleration, constraint error and bone-length metrics."""
    configure_log_level(log_level)
    with exit_on_error():
        reports = cmd_eval(target, task, parse_params(param))

    if csv is not None:
        write_report_csv(csv, reports)
    if as_json:
        payload = reports[0].model_dump() if len(reports) == 1 else [r.model_dump() for r in reports]
        typer.echo(json.dumps(payload, indent=2))
    else:
        stdout_console.print(metrics_table(reports))
