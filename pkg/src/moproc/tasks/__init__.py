"""The task corpus: constraint programs plus their metadata.

Programs live as `<id>.mopro` files in `corpus/`, metadata in `tasks.toml`.
Setting `MOPROC_CORPUS` to a directory adds its `.mopro` files to the
corpus (replacing shipped tasks with the same id) and merges its own
`tasks.toml`, if present, over the shipped one.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any

from moproc.configuration.defaults import CORPUS_ENV_VAR
from moproc.configuration.models import ParamValue, RelaxSpec, TaskMetadata
from moproc.configuration.resolver import read_toml
from moproc.dsl import load_program
from moproc.dsl.compiler import ErrorProgram
from moproc.errors import UnknownTaskError, UserError
from moproc.kinematics import Skeleton
from moproc.metrics import CONSTRAINT_FORMULAS

logger = logging.getLogger(__name__)

PACKAGE_DIR = Path(__file__).parent
SHIPPED_CORPUS = PACKAGE_DIR / "corpus"
METADATA_FILE = "tasks.toml"
PROGRAM_SUFFIX = ".mopro"


@dataclass(frozen=True)
class TaskSpec:
    """A compiled task and its metadata."""

    id: str
    source: str
    program: ErrorProgram = field(repr=False)
    metadata: TaskMetadata = field(default_factory=TaskMetadata)
    path: Path | None = None

    @property
    def default_params(self) -> dict[str, ParamValue]:
        """Declared parameter defaults as plain floats and lists."""
        params: dict[str, ParamValue] = {}
        for spec in self.program.params:
            if spec.default is None:
                continue
            params[spec.name] = spec.default.tolist() if spec.default.ndim else float(spec.default)
        return params

    @property
    def relax(self) -> RelaxSpec:
        return self.metadata.relax

    @property
    def formulas(self) -> list[str]:
        return self.metadata.formulas

    @property
    def frames(self) -> int:
        return self.metadata.frames

    @property
    def summary(self) -> str:
        return self.metadata.summary


def _metadata(task_id: str, table: dict[str, Any] | None, source: str) -> TaskMetadata:
    try:
        metadata = TaskMetadata.model_validate(table or {})
    except ValueError as e:
        raise UserError(f"Invalid metadata for task '{task_id}' in {source}: {e}") from None
    unknown = [name for name in metadata.formulas if name not in CONSTRAINT_FORMULAS]
    if unknown:
        raise UserError(
            f"Task '{task_id}' uses unknown constraint-error formulas: {', '.join(unknown)}"
        )
    return metadata


def load_task(path: Path, table: dict[str, Any] | None = None, skeleton: Skeleton | None = None) -> TaskSpec:
    """Compile one `.mopro` file with its metadata table.

    The task id is the file stem; a program declaring a different name
    still loads, with a warning.

    Raises:
        DiagnosticError: If the program does not parse or typecheck
        UserError: If the metadata is invalid
    """
    path = Path(path)
    source = path.read_text()
    program = load_program(source, skeleton)
    if program.name != path.stem:
        logger.warning(f"{path.name} declares task '{program.name}'; registering it as '{path.stem}'")
    return TaskSpec(path.stem, source, program, _metadata(path.stem, table, str(path)), path)


def adhoc_task(source: str, skeleton: Skeleton | None = None, path: Path | None = None) -> TaskSpec:
    """Wrap a user program that has no metadata; its C.Err is its own error."""
    program = load_program(source, skeleton)
    return TaskSpec(program.name, source, program, TaskMetadata(), path)


def _merged_metadata(override: Path | None) -> dict[str, dict[str, Any]]:
    tables = read_toml(PACKAGE_DIR / METADATA_FILE)
    if override is not None and (override / METADATA_FILE).exists():
        for task_id, table in read_toml(override / METADATA_FILE).items():
            logger.debug(f"Merging metadata for '{task_id}' from {override}")
            tables[task_id] = {**tables.get(task_id, {}), **table}
    return tables


def _program_files(override: Path | None) -> dict[str, Path]:
    files = {p.stem: p for p in sorted(SHIPPED_CORPUS.glob(f"*{PROGRAM_SUFFIX}"))}
    if override is not None:
        if not override.is_dir():
            raise UserError(f"{CORPUS_ENV_VAR} is not a directory: {override}")
        for p in sorted(override.glob(f"*{PROGRAM_SUFFIX}")):
            if p.stem in files:
                logger.info(f"Task '{p.stem}' overridden by {p}")
            files[p.stem] = p
    return files


@lru_cache(maxsize=4)
def _load_corpus(override: str | None) -> dict[str, TaskSpec]:
    override_dir = Path(override) if override else None
    tables = _merged_metadata(override_dir)
    files = _program_files(override_dir)
    for task_id in sorted(set(tables) - set(files)):
        logger.warning(f"Metadata for '{task_id}' has no {PROGRAM_SUFFIX} file")
    return {task_id: load_task(path, tables.get(task_id)) for task_id, path in files.items()}


def _corpus() -> dict[str, TaskSpec]:
    return _load_corpus(os.environ.get(CORPUS_ENV_VAR) or None)


def get_task(task_id: str) -> TaskSpec:
    """Look up a task by id.

    Raises:
        UnknownTaskError: If no task has this id
    """
    tasks = _corpus()
    if task_id not in tasks:
        raise UnknownTaskError(task_id, sorted(tasks))
    return tasks[task_id]


def list_tasks() -> list[str]:
    """Ids of every task in the corpus, sorted."""
    return sorted(_corpus())
