"""Exception hierarchy shared by every module."""


class BotSSCLError(Exception):
    """Base class for all errors raised by the package."""


class ConfigurationError(BotSSCLError, ValueError):
    """Invalid configuration or an operation that is undefined for its inputs."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DimensionError(BotSSCLError, ValueError):
    """Array shapes do not agree."""


class DataError(BotSSCLError, ValueError):
    """Input data violates a documented precondition."""


class ParseError(BotSSCLError, ValueError):
    """A dataset or config file could not be parsed.

    ``row`` is 1-based (header is row 1) and ``column`` is the column name
    when the problem can be pinned to a single cell.
    """

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.row = row
        self.column = column


class GridOverflowError(ConfigurationError):
    """Cartesian product of an attack grid exceeds the per-sample query budget."""

