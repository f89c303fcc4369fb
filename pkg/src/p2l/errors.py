"""Exception types raised across the package.

Everything derives from P2LError so callers can catch the whole family;
the CLI maps subfamilies onto exit codes.
"""


class P2LError(Exception):
    """Base class for all domain errors."""


# -- validation / construction ------------------------------------------------

class EmptyMatrix(P2LError):
    """Embedding matrix has no rows or no columns."""


class NonFiniteValue(P2LError):
    """A value that must be finite is NaN or infinite."""

    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(message if line_no is None else f"line {line_no}: {message}")
        self.line_no = line_no


class DimensionMismatch(P2LError):
    """Vectors or profiles of different dimensionality were combined."""


class NonPositiveEpsilon(P2LError):
    """Smoothing epsilon must be a finite value > 0."""


# -- summarization ------------------------------------------------------------

class NegativeMass(P2LError):
    """Summary mean has non-positive total mass and cannot be L1-normalized."""


class NegativeComponent(P2LError):
    """Summary mean has a negative component; probability distances are undefined."""


# -- divergence ---------------------------------------------------------------

class NonPositiveComponent(P2LError):
    """Probability-type distance applied to an unsmoothed vector with a zero."""


# -- estimation / selection ---------------------------------------------------

class DuplicateSourceName(P2LError):
    """Candidate set contains two sources with the same name."""


class EmptyCandidates(P2LError):
    """Selection requested over an empty candidate set."""


class MissingReference(P2LError):
    """Fixed-reference baseline was asked for without a valid reference source."""


class MissingSeed(P2LError):
    """Random baseline was asked for without an explicit seed."""


class MixedSummarizers(P2LError):
    """Profiles built with different summarizers cannot be merged."""


class MixedExtractors(P2LError):
    """Profiles from different reference extractors were compared without override."""


# -- rank statistics / calibration ---------------------------------------------

class LengthMismatch(P2LError):
    """Paired score lists have different or insufficient length."""


class DegenerateConstantInput(P2LError):
    """Rank correlation of an all-constant list is undefined."""


class UnknownSource(P2LError):
    """A record or ranking references a source that is not in the pool."""


class TooFewSources(P2LError):
    """A calibration task has fewer than three candidate sources."""


class MissingRecord(P2LError):
    """A selected source has no ground-truth record."""


class ZeroDenominator(P2LError):
    """Relative gain against a method with zero performance."""


# -- file formats / registry ----------------------------------------------------

class BadHeader(P2LError):
    """File header is missing or malformed."""


class RaggedRow(P2LError):
    """A data row does not match the declared dimensionality."""

    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(message if line_no is None else f"line {line_no}: {message}")
        self.line_no = line_no


class BadMagic(P2LError):
    """Binary file does not start with the expected magic bytes."""


class TruncatedFile(P2LError):
    """Binary file payload is shorter (or longer) than its header declares."""


class UnsupportedVersion(P2LError):
    """File or registry format version is not supported."""


class NameCollision(P2LError):
    """Saving a profile would overwrite an existing one without the overwrite flag."""


class NotFound(P2LError):
    """Requested profile or registry entry does not exist."""


class InvalidName(P2LError):
    """Name is not filesystem-safe ([A-Za-z0-9_-]+)."""


# -- synthetic oracle -----------------------------------------------------------

class BadSpec(P2LError):
    """World specification violates a structural requirement."""


class UnknownName(P2LError):
    """Domain name not present in the world."""
