"""Exception hierarchy shared across the package."""


class AdflowError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(AdflowError):
    """An argument is outside its documented domain."""


class ShapeError(AdflowError):
    """Two signals that must agree in length or sample rate do not."""


class DegenerateInputError(AdflowError):
    """An input is degenerate (e.g. zero reference, zero-norm embedding)."""


class SingularityError(AdflowError):
    """The closed-form velocity is singular at the requested point."""


class DivergenceError(AdflowError):
    """Training or integration produced a non-finite value."""


class ConfigError(AdflowError):
    """A run configuration file is malformed or contains unknown keys."""


class FileFormatError(AdflowError):
    """A file on disk does not match the expected format."""
