"""Exception hierarchy shared across the package."""


class CantsError(Exception):
    """Base class for every error raised deliberately by this package."""


class ConfigError(CantsError, ValueError):
    """An invalid configuration value."""


class StructuralError(CantsError):
    """A genome violates a structural invariant (e.g. a zero-delay cycle)."""


class InternalError(CantsError, AssertionError):
    """An upstream invariant was broken; this indicates a bug, not bad input."""


class GenomeFormatError(CantsError, ValueError):
    """Serialized genome text could not be parsed.

    ``location`` points at the offending spot, either a ``line:col`` pair for
    JSON syntax errors or a dotted field path for schema errors.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)


class UnsupportedVersionError(GenomeFormatError):
    pass


class EmptyDatasetError(CantsError, ValueError):
    pass


class DataError(CantsError, ValueError):
    pass


class EmptyFileError(DataError):
    pass


class MissingColumnError(DataError):
    def __init__(self, column, available):
        self.column = column
        super().__init__(f"column {column!r} not found; available: {', '.join(available)}")


class NonNumericError(DataError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        super().__init__(f"non-numeric value {value!r} in column {column!r} at row {row}")


class FramingError(CantsError):
    """A wire frame is truncated or its length prefix does not match."""


class MessageSchemaError(CantsError, ValueError):
    """A well-framed message whose JSON payload is not a valid message."""
