"""Exception hierarchy.

Everything raised on bad input derives from :class:`GridWarError`, which the
CLI maps to exit code 1. Anything else escaping a subcommand is a bug (exit 2).
"""


class GridWarError(ValueError):
    """Base class for validation and data errors."""


class SchemaError(GridWarError):
    """Input file is missing required columns or has an unusable header."""


class DataError(GridWarError):
    """Input records are internally inconsistent."""


class ConvergenceError(GridWarError):
    def __init__(self, message: str, trace: list[float] | None = None):
        super().__init__(message)
        self.trace = list(trace or [])


class SeparationError(GridWarError):
    """A logistic coefficient diverged (quasi-complete separation)."""

    def __init__(self, message: str, level: str | None = None):
        super().__init__(message)
        self.level = level


class RankDeficiencyError(GridWarError):
    def __init__(self, message: str, columns: list[str] | None = None):
        super().__init__(message)
        self.columns = list(columns or [])


class InsufficientDataError(GridWarError):
    """Too few observations to produce a requested estimate."""


class OutOfWindowError(GridWarError):
    """A context (year, park, ...) the fitted model was not trained on."""
