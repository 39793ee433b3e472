"""Exception types shared across the package."""


class SctcError(Exception):
    """Base class for package errors."""


class DimensionError(SctcError, ValueError):
    """Operand shapes are incompatible."""


class ConfigurationError(SctcError, ValueError):
    """A configuration or argument combination is invalid."""


class MissingGradientError(SctcError, RuntimeError):
    """An optimizer step was requested for a parameter without a gradient."""


class ParseError(SctcError, ValueError):
    """A serialized file is malformed.

    ``offset`` is the byte offset at which parsing failed and ``field`` names
    the part of the document being read, when known.
    """

    def __init__(self, message, offset=None, field=None):
        self.offset = offset
        self.field = field
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ValidationError(SctcError, ValueError):
    """A parsed object violates a domain invariant (e.g. an inverted box)."""


class VocabularyError(SctcError, KeyError):
    """An (action, object) combination is not part of the HOI vocabulary."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown HOI category"


class NumericalError(SctcError, FloatingPointError):
    """A loss or activation became non-finite.

    ``component`` names the offending loss term.
    """

    def __init__(self, message, component=None):
        self.component = component
        super().__init__(message)


class LoadError(SctcError, ValueError):
    """A checkpoint is incompatible with the requested configuration."""
