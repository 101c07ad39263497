"""Exception types shared across the toolkit."""


class FocalFuseError(Exception):
    """Base class for every error raised by this package."""

    kind = "error"


class ConfigError(FocalFuseError, ValueError):
    kind = "config_error"


class ShapeError(FocalFuseError, ValueError):
    kind = "shape_error"


class DataError(FocalFuseError, ValueError):
    kind = "data_error"


class ParseError(DataError):
    """A malformed line in a table file. ``line`` is 1-based."""

    kind = "parse_error"

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
        super().__init__(where + message)


class AlignmentError(DataError):
    kind = "alignment_error"


class NumericError(FocalFuseError, FloatingPointError):
    kind = "numeric_error"
