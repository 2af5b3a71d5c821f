"""Exception hierarchy shared by every stage of the cleaning pipeline."""


class SoreError(Exception):
    """Base class for all pipeline errors."""


class EmptyDocument(SoreError):
    """No text segment survived parsing and filtering."""


class TextTooShort(SoreError):
    """Input text is shorter than the minimum n-gram length."""


class DimensionMismatch(SoreError):
    """Two vectors (or a vector and an index) disagree on dimensionality."""


class ProviderUnavailable(SoreError):
    """The embedding provider could not be reached after all retries."""


class CorruptIndex(SoreError):
    """A serialized ANN index failed validation."""


class ConfigParse(SoreError):
    """An outlier-groups file could not be parsed.

    Attributes:
        line: 1-based line number of the offending line, if known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
