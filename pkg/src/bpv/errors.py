"""Exception hierarchy shared across the package.

CLI exit-code mapping: UsageError -> 1, DataError subtypes -> 2,
NumericError subtypes -> 3.
"""


class BpvError(Exception):
    """Base class for all package errors."""


class UsageError(BpvError):
    """Bad flags or flag combinations."""


class DataError(BpvError):
    """Malformed or unusable input data."""


class FormatError(DataError):
    """A file does not parse as the expected format."""


class EmptyVocabulary(DataError):
    """No term survived the frequency threshold."""


class EmptyCorpus(DataError):
    """No document survived encoding."""


class DegenerateData(DataError):
    """Input matrix cannot support the requested code size."""


class WidthOverflow(DataError):
    """Requested code width is outside the supported range."""


class WidthMismatch(DataError):
    """Two codes of different widths were combined."""


class IdMismatch(DataError):
    """Document ids in two inputs do not line up."""


class DuplicateId(DataError):
    """The same document id appears twice in one collection."""


class MissingLabels(DataError):
    """A document used in evaluation has no labels."""


class UnknownQuery(DataError):
    """Query id is not present in the index."""


class IncompatibleModel(DataError):
    """Model file is unreadable or does not fit the requested operation."""


class ConfigError(DataError):
    """Invalid training or evaluation configuration value."""


class NumericError(BpvError):
    """Numeric breakdown during training or inference."""


class NonFiniteInput(NumericError):
    """An input array contains NaN or infinity."""


class NonFiniteLoss(NumericError):
    """The objective evaluated to NaN or infinity."""


class NonFiniteGradient(NumericError):
    """A gradient contains NaN or infinity."""


class DivergedError(NumericError):
    """Parameters or losses left the finite range during optimization."""
