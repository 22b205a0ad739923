"""Exception types shared across the package."""


class DFRError(Exception):
    """Base class for all package errors."""


class DimensionError(DFRError, ValueError):
    """Array shapes or vector lengths do not agree."""


class ParameterError(DFRError, ValueError):
    """An argument is outside its legal range."""


class ConfigurationError(DFRError, ValueError):
    """A model, schema or run configuration is invalid."""


class FormatError(DFRError, ValueError):
    """A serialized file is malformed.

    ``section`` names the part of the file that failed to parse.
    """

    def __init__(self, message: str, section: str = ""):
        super().__init__(message)
        self.section = section


class VerticalLineError(DFRError, ArithmeticError):
    """Slope is undefined because both endpoints share an x coordinate."""


class StratificationError(DFRError, ValueError):
    """A stratified split cannot place a subject in both partitions."""


class ParseError(DFRError, ValueError):
    """Annotation file row could not be parsed."""

    def __init__(self, message: str, row: int, column: str):
        super().__init__(f"row {row}, column {column!r}: {message}")
        self.row = row
        self.column = column
