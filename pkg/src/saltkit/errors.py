"""Exception types shared across the toolkit."""


class SaltkitError(Exception):
    """Base class for all toolkit errors."""


class FormatError(SaltkitError):
    """A file does not conform to one of the on-disk formats."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class TruncatedPayloadError(FormatError):
    """Payload is shorter than the header promises."""


class NonFiniteValueError(FormatError):
    """Matrix payload contains NaN or infinity."""


class DimensionError(FormatError):
    """Declared dimensions are zero or implausibly large."""


class VocabularyError(FormatError):
    """Vocabulary file is malformed (bad JSON, duplicates, empty)."""


class VectorTableError(FormatError):
    """Word-vector text file is malformed."""


class NoCandidatesError(SaltkitError):
    """A token has no usable similarity candidates; caller should fall back."""


class ConfigError(SaltkitError):
    """Run configuration is invalid."""
