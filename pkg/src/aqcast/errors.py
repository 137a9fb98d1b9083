"""Exception hierarchy shared across the toolkit.

Every error raised deliberately by aqcast derives from :class:`AqcastError`,
so callers (and the CLI) can distinguish data problems from genuine bugs.
"""

from __future__ import annotations


class AqcastError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(AqcastError):
    """Malformed tabular input (bad column, bad value, bad header).

    Carries enough context to point at the offending cell.
    """

    def __init__(self, message: str, *, file: str | None = None,
                 line: int | None = None, column: str | None = None):
        self.file = file
        self.line = line
        self.column = column
        where = []
        if file is not None:
            where.append(str(file))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class ParseError(AqcastError):
    """Malformed raster file; carries the 1-based line number."""

    def __init__(self, message: str, *, file: str | None = None,
                 line: int | None = None):
        self.file = file
        self.line = line
        where = []
        if file is not None:
            where.append(str(file))
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class DimensionMismatch(AqcastError):
    """Array or grid shape differs from what was declared or fitted."""


class GapError(AqcastError):
    """A source that must be gap-free is missing a date."""


class UnknownStation(AqcastError):
    """Row references a station id absent from stations.csv."""


class UnknownPollutant(AqcastError):
    """Pollutant name outside the closed five-element set."""


class UnknownClass(AqcastError):
    """Land-cover raster value with no entry in the class map."""

    def __init__(self, raw_class: int):
        self.raw_class = raw_class
        super().__init__(f"unmapped land-cover class {raw_class}")


class OutOfExtent(AqcastError):
    """Point sample requested outside a grid's bounding box."""


class DomainError(AqcastError):
    """Input outside an operation's documented domain."""


class AllMissing(AqcastError):
    """Series has no observed value, so gaps cannot be filled."""


class DivergenceError(AqcastError):
    """Iterative fit produced non-finite loss or weights."""


class ConfigError(AqcastError):
    """Invalid learner or run configuration."""


class VersionError(AqcastError):
    """Model file declares a format version this build does not know."""


class CorruptModel(AqcastError):
    """Model file failed checksum or structural validation."""


class LengthMismatch(AqcastError):
    """Paired vectors have different lengths."""


class EmptyInput(AqcastError):
    """Metric requested on zero samples."""


class AllExcluded(AqcastError):
    """Every sample was excluded from a metric (e.g. all actuals ~0)."""


class InsufficientYears(AqcastError):
    """Year-wise cross-validation needs at least two distinct years."""


class MissingCell(AqcastError):
    """Report requested for a (pollutant, model, w) cell with no results."""


class EmptyOutput(AqcastError):
    """An operation that must yield at least one record yielded none."""
