"""Exception types shared by the services and mapped onto CLI exit codes."""
from typing import Optional


class PqcBenchError(Exception):
    """Base class for every error raised by this project."""


class InvalidArgumentError(PqcBenchError, ValueError):
    """An argument has the wrong length, range or kind."""


class NotFoundError(PqcBenchError, LookupError):
    """A scheme, PE or calibration entry is not registered."""


class MalformedInputError(PqcBenchError, ValueError):
    """Input bytes are too short or structurally broken."""


class DataError(PqcBenchError, ValueError):
    """A dataset or calibration table is inconsistent."""


class ConfigurationError(PqcBenchError):
    """Required configuration (paths, calibration) is missing or invalid."""


class JobTimeoutError(PqcBenchError, TimeoutError):
    """A job did not complete within its timeout."""


class KatGenerationError(PqcBenchError):
    """The engine failed its own self-check while generating KAT cases."""


class KatParseError(PqcBenchError, ValueError):
    """A .rsp file could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        location = f"line {line}: " if line is not None else ""
        super().__init__(f"{location}{message}")
