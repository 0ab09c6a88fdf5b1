"""Exception types shared across the package.

All are ValueError/RuntimeError subclasses so callers that do not care
about the distinction can catch the builtin bases.
"""


class DimensionError(ValueError):
    """Array shapes are inconsistent with the operation's contract."""


class ConfigError(ValueError):
    """A configuration object violates its invariants."""


class RangeError(ValueError):
    """A scalar parameter is outside its documented range."""


class EmptyInputError(ValueError):
    """An operation received an empty reduction population or corpus."""


class DegenerateFeatureError(ValueError):
    """A feature vector has zero norm (or a centered matrix is all zero)."""


class AlignmentError(ValueError):
    """Two record collections that must share ids and ordering do not."""


class FormatError(RuntimeError):
    """A file does not conform to its on-disk format."""
