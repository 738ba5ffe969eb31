"""Exception taxonomy shared across the package."""


class SlateError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(SlateError):
    """Tensor or array shapes are incompatible with the requested operation."""


class ConfigError(SlateError):
    """A configuration value is invalid (non-tiling window, bad factor, ...)."""


class FormatError(SlateError):
    """A serialized file or bit payload is malformed."""


class NumericsError(SlateError):
    """A numerical failure: NaN propagation, solver non-convergence, diverged training."""


class StateError(SlateError):
    """Recurrent state misuse, e.g. carrying state across unrelated sequences."""


class DegeneracyError(SlateError):
    """Degenerate numerical input: zero-norm or linearly dependent vectors."""


class UsageError(SlateError):
    """API misuse, e.g. calling backward on a non-scalar value."""
