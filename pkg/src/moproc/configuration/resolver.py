"""Optimizer configuration resolution from multiple sources.

This module provides the ConfigResolver class which merges optimizer settings
from multiple sources with proper precedence:

1. DEFAULT_OPTIM_CONFIG (configuration/defaults.py)
2. [<task-id>.config] from tasks/tasks.toml
3. [optim] from a user TOML file (`--config path.toml`)
4. CLI flags (`--lr`, `--steps`, `--restarts`, ...)

Task tables carry tuned defaults for a task (e.g. a longer budget), the user
file captures an experimenter's standing preferences, and flags win for the
one run at hand.
"""

import logging
import sys
from pathlib import Path
from typing import Any, cast

import tomlkit
import tomlkit.items

from moproc.configuration.defaults import DEFAULT_OPTIM_CONFIG
from moproc.configuration.models import OptimConfig
from moproc.errors import UserError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib  # ty: ignore[unresolved-import]

logger = logging.getLogger(__name__)

USER_CONFIG_TABLE = "optim"


def read_toml(path: Path) -> dict[str, Any]:
    """Parse a TOML file, mapping IO and syntax problems to `UserError`."""
    try:
        return tomllib.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UserError(f"Config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise UserError(f"Invalid TOML in {path}: {e}") from None


def _merge_layer(base: dict[str, Any], layer: dict[str, Any] | None, source: str) -> dict[str, Any]:
    """Validate `layer` on its own, then let its set keys override `base`."""
    if not layer:
        return base.copy()
    layer = {k: v for k, v in layer.items() if v is not None}
    try:
        OptimConfig.model_validate({**DEFAULT_OPTIM_CONFIG, **layer})
    except ValueError as e:
        raise UserError(f"Invalid optimizer settings from {source}: {e}") from None
    logger.debug(f"Merging {source} config: {layer}")
    merged = base.copy()
    merged.update(layer)
    return merged


class ConfigResolver:
    """Resolves `OptimConfig` from defaults, task metadata, a user file and flags.

    Configuration precedence (later overrides earlier):
    1. DEFAULT_OPTIM_CONFIG (moproc defaults)
    2. Task config ([<id>.config] in tasks.toml)
    3. User config file ([optim] table)
    4. CLI overrides

    Every layer is validated by itself so an error names the layer it came
    from; `None` values in a layer mean "not set" and are skipped.

    Example:
        >>> resolver = ConfigResolver(Path("my-settings.toml"))
        >>> config = resolver.resolve(
        ...     task_config={"steps": 200},
        ...     cli_config={"lr": 0.01, "restarts": None},
        ... )
    """

    def __init__(self, user_config_path: Path | None = None):
        """Initialize a ConfigResolver.

        Args:
            user_config_path: Optional TOML file holding an [optim] table
        """
        self.user_config_path = user_config_path
        self._user_cache: dict | None = None

    def resolve(
        self,
        task_config: dict[str, Any] | None = None,
        cli_config: dict[str, Any] | None = None,
    ) -> OptimConfig:
        """Merge all sources in priority order and validate the result.

        Raises:
            UserError: If any layer holds unknown keys or invalid values
        """
        # Layer 1: defaults
        config = DEFAULT_OPTIM_CONFIG.copy()
        logger.debug(f"Starting with DEFAULT_OPTIM_CONFIG: {config}")

        # Layer 2: task metadata
        config = _merge_layer(config, task_config, "task metadata")

        # Layer 3: user file
        config = _merge_layer(config, self._load_user_config(), str(self.user_config_path))

        # Layer 4: CLI flags
        config = _merge_layer(config, cli_config, "command line")

        logger.debug(f"Final resolved config: {config}")
        return OptimConfig.model_validate(config)

    def _load_user_config(self) -> dict[str, Any]:
        if self._user_cache is not None:
            return self._user_cache.copy()
        if self.user_config_path is None:
            self._user_cache = {}
            return {}
        table = read_toml(self.user_config_path).get(USER_CONFIG_TABLE, {})
        if not isinstance(table, dict):
            raise UserError(f"[{USER_CONFIG_TABLE}] in {self.user_config_path} must be a table")
        self._user_cache = table
        return table.copy()


def write_user_config(path: Path, config: OptimConfig) -> str | None:
    """Write `config` into the [optim] table of `path`, keeping other content.

    Existing keys in the table are left alone so hand edits survive; keys the
    table lacks are added with their field description as a comment.

    Returns:
        A skip message if every key was already present, None otherwise.
    """
    path = Path(path)
    doc = tomlkit.parse(path.read_text()) if path.exists() else tomlkit.document()
    if USER_CONFIG_TABLE not in doc:
        doc[USER_CONFIG_TABLE] = tomlkit.table()
    table = cast(tomlkit.items.Table, doc[USER_CONFIG_TABLE])

    added = 0
    descriptions = _field_descriptions()
    for key, value in config.model_dump().items():
        if key in table:
            continue
        item = tomlkit.item(value)
        if note := descriptions.get(key):
            item.comment(note)
        table[key] = item
        added += 1

    path.write_text(tomlkit.dumps(doc))
    if added == 0:
        return f"[{USER_CONFIG_TABLE}] in {path} already sets every option"
    return None


def _field_descriptions() -> dict[str, str]:
    """Parse the Attributes section of the OptimConfig docstring."""
    notes = {}
    for line in (OptimConfig.__doc__ or "").splitlines():
        name, sep, text = line.strip().partition(": ")
        if sep and name in OptimConfig.model_fields:
            notes[name] = text
    return notes
