"""Logging for the `moproc` logger hierarchy.

Modules log through `logging.getLogger(__name__)`; this module owns the one
stderr handler on the `moproc` parent logger. The level comes from the
`--log-level` flag when given, else from MOPROC_LOG_LEVEL, else WARNING.
"""

import logging
import os
import sys

from moproc.configuration.defaults import LOG_LEVEL_ENV_VAR

LOGGER_NAME = "moproc"
LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"
DATE_FORMAT = "%H:%M:%S"


def resolve_level(name: str | None) -> int:
    """Numeric level for `name`, falling back to the environment and then WARNING."""
    name = (name or os.getenv(LOG_LEVEL_ENV_VAR) or "WARNING").strip().upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.WARNING


def setup_logging(level: str | None = None) -> None:
    """Set the `moproc` logger level and attach its stderr handler once.

    Safe to call repeatedly; later calls only change the level.
    """
    numeric = resolve_level(level)
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(numeric)

    handler = next((h for h in logger.handlers if getattr(h, "_moproc", False)), None)
    if handler is None:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
        handler._moproc = True  # type: ignore[attr-defined]
        logger.addHandler(handler)
    handler.setLevel(numeric)

    # pytest's caplog listens on the root logger
    logger.propagate = True
