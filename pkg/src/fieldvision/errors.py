"""Exception hierarchy shared across the pipeline.

DataError maps to CLI exit code 1, UsageError to exit code 2.
"""


class FieldVisionError(Exception):
    """Base class for all errors raised by this package."""


class DataError(FieldVisionError):
    """Malformed input data or violated data invariant."""


class SchemaError(DataError):
    """Document or file does not match its declared schema."""


class DegenerateGeometryError(DataError):
    """Point configuration does not determine the requested transform."""


class ConvergenceError(FieldVisionError):
    """Iterative solver failed to converge within its iteration cap."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class UsageError(FieldVisionError):
    """Bad command-line or API usage."""
