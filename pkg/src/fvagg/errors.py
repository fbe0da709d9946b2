"""Exception hierarchy.

InvalidInputError and its subclasses map to CLI exit code 2, DataIOError to
exit code 3.
"""


class FvaggError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(FvaggError):
    """Caller-supplied data violates a precondition."""


class ShapeError(InvalidInputError):
    """Array dimensions do not agree."""


class EmptyInputError(InvalidInputError):
    """An operation that needs at least one descriptor received none."""


class InsufficientDataError(InvalidInputError):
    """Fewer descriptors than mixture components."""


class InvalidDescriptorError(InvalidInputError):
    """Descriptor data contains NaN or Inf."""


class DegenerateDataError(InvalidInputError):
    """Descriptor data cannot support a valid mixture (zero variance)."""


class DegenerateSplitError(InvalidInputError):
    """A foreground/background split rounds one side to zero samples."""


class DegenerateLabelsError(InvalidInputError):
    """Training labels contain fewer than two distinct classes."""


class LabelError(InvalidInputError):
    """A label is not in the configured class list."""


class DoubleNormalizationError(InvalidInputError):
    """normalize_fv applied to an already-normalized vector."""


class DataIOError(FvaggError):
    """A file is missing, unreadable, truncated, or has the wrong magic."""
