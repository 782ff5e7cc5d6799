"""Exception hierarchy shared by all eprlab modules."""

from __future__ import annotations


class EprLabError(Exception):
    """Base class for every error raised by eprlab."""


class DomainError(EprLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(EprLabError, ValueError):
    """An experiment or CLI configuration is invalid."""


class UsageError(EprLabError, ValueError):
    """An operation was called outside its defined preconditions."""


class EmptyCellError(EprLabError, ValueError):
    """No records match the requested setting (cell of the design)."""


class ConditioningOnNullError(EprLabError, ZeroDivisionError):
    """A conditional probability was requested given an event with zero count."""


class InsufficientDataError(EprLabError, ValueError):
    """Too few samples for the requested statistic."""


class ReportError(EprLabError, ValueError):
    """A report cannot be built from the supplied data."""


class PreconditionError(EprLabError, ValueError):
    """Numerical precondition violated (e.g. an orbital is not normalized)."""


class LogParseError(EprLabError, ValueError):
    """A trial-log file is malformed. ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class LogFormatError(EprLabError, ValueError):
    """A trial-log file has an unsupported format version."""
