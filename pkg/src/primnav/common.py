import logging
import os

import coloredlogs

FORMAT = "%(asctime)s %(hostname)s %(name)s:%(lineno)d %(levelname)s %(message)s"
FIELD_STYLES = coloredlogs.DEFAULT_FIELD_STYLES | {"levelname": {"color": "magenta"}}
DEFAULT_LOG_LEVEL = logging.INFO

SEED_ENV_VAR = "PRIMNAV_SEED"


def get_logger(name: str, level: int | None = None):
    """
    Configures and returns a logger with colored output.

    The log level can be set via the COLOREDLOGS_LOG_LEVEL environment variable
    or by explicitly passing the 'level' argument. Defaults to INFO.
    """
    log_level = level if level is not None else os.environ.get("COLOREDLOGS_LOG_LEVEL")
    coloredlogs.install(
        level=log_level or DEFAULT_LOG_LEVEL,
        fmt=FORMAT,
        field_styles=FIELD_STYLES,
        logger=logging.getLogger(name),
        isatty=True,
    )
    return logging.getLogger(name)


def resolve_seed(seed: int) -> int:
    """Return the seed from PRIMNAV_SEED when it is set, else `seed`."""
    override = os.environ.get(SEED_ENV_VAR)
    if override is None or override.strip() == "":
        return seed
    try:
        return int(override)
    except ValueError as exc:
        raise ConfigurationError(
            f"{SEED_ENV_VAR} must be an integer, got {override!r}"
        ) from exc


class PrimnavError(Exception):
    """Base class of every error raised on purpose by primnav."""


class ConfigurationError(PrimnavError, ValueError):
    """Inconsistent layer shapes, action tables or configuration values."""


class InputValidationError(PrimnavError, ValueError):
    """Network or renderer input outside its declared domain."""


class WorldParseError(PrimnavError, ValueError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class WorldValidationError(PrimnavError, ValueError):
    """World geometry breaking an invariant (degenerate box, start in collision...)."""


class CheckpointError(PrimnavError):
    """Checkpoint bytes that are truncated, corrupt or built for another network."""


class TrainingError(PrimnavError):
    """Non-finite loss or gradient during optimization."""


class EpisodeUsageError(PrimnavError, RuntimeError):
    """Stepping an episode that already terminated."""

