"""Exception types shared across the package.

Everything raised on purpose derives from BowimgError so callers (and the
CLI exit-code mapping) can tell our failures from genuine bugs.
"""


class BowimgError(Exception):
    """Base class for all bowimg errors."""


class ParseError(BowimgError):
    """Input file is not valid JSON; message names the byte offset."""


class SchemaError(BowimgError):
    """JSON parsed but a required field is missing or malformed."""


class ArityError(BowimgError):
    """An answer list does not contain exactly 10 entries."""


class JoinError(BowimgError):
    """Annotations reference question ids that do not exist."""


class StoreFormatError(BowimgError):
    """Feature store has a bad magic, bad version, or truncated payload."""


class IntegrityError(BowimgError):
    """Duplicate ids or non-finite values where uniqueness/finiteness is required."""


class NotFoundError(BowimgError):
    """A requested record (image id, file) is absent."""


class DimensionError(BowimgError):
    """Array shapes are inconsistent or a dimension is zero."""


class LabelError(BowimgError):
    """A training label falls outside [0, num_answers)."""


class CheckpointError(BowimgError):
    """Checkpoint cannot be loaded: bad version, dims, or truncation."""


class ArgumentError(BowimgError):
    """An operation was called with unusable arguments (e.g. empty choices)."""


class DivergenceError(BowimgError):
    """Training produced a non-finite loss."""


# Everything except DivergenceError is a data error for CLI purposes:
# exit 2 for bad inputs, exit 3 for runtime/divergence failures.
DATA_ERRORS = (
    ParseError,
    SchemaError,
    ArityError,
    JoinError,
    StoreFormatError,
    IntegrityError,
    NotFoundError,
    DimensionError,
    LabelError,
    CheckpointError,
    ArgumentError,
)
