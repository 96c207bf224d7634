"""Typed error hierarchy.

Every failure mode the library can report deliberately is a subclass of
FpbitsError, so callers (and the CLI) can catch one base type and map it
to a message plus nonzero exit code instead of crashing on a bare
ValueError from half-parsed input.
"""


class FpbitsError(Exception):
    """Base class for all errors raised deliberately by this package."""


# --- template / image parsing ---

class MalformedHeader(FpbitsError):
    """A template or image header could not be parsed."""


class FieldOutOfRange(FpbitsError):
    """A parsed field violates its declared range (position, quality, ...)."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class AngleUnparseable(FpbitsError):
    """A minutia direction field was not a finite real number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class BadMagic(FpbitsError):
    """A binary record does not start with the expected magic bytes."""


class TruncatedRecord(FpbitsError):
    """A binary record ends before its declared content does."""


class UnsupportedVersion(FpbitsError):
    """A record declares a format version this package does not read."""


class DimensionMismatch(FpbitsError):
    """Image payload size disagrees with its declared dimensions."""


# --- numerics ---

class TooFewSamples(FpbitsError):
    """A statistical fit was asked for with fewer than two samples."""


class RankDeficient(FpbitsError):
    """More principal directions were requested than the data can supply."""


class PoolTooSmall(FpbitsError):
    """Clustering was asked for more clusters than pool vectors."""


class DegeneratePool(FpbitsError):
    """A cluster has no external points, so its boundary is undefined."""


class EmptyImage(FpbitsError):
    """An impression produced no descriptor vectors."""


class EmptyTrainingSet(FpbitsError):
    """A training statistic was requested over zero groups."""


class EmptyEnrollment(FpbitsError):
    """Finger enrollment was attempted with zero samples."""


class EmptyScores(FpbitsError):
    """A protocol metric was requested with an empty score list."""


class LengthMismatch(FpbitsError):
    """Two bit-strings (or vectors) of different lengths were compared."""


class BadLength(FpbitsError):
    """A fold length outside [1, template length] was requested."""


class ModelMissing(FpbitsError):
    """A referenced model or artifact file does not exist."""
