"""Exception hierarchy shared by the library, CLI and service.

ValidationError and FormatError map to CLI exit code 1,
NumericalError to exit code 2.
"""


class SlatError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SlatError):
    """Bad arguments, inconsistent shapes, out-of-range parameters."""


class FormatError(SlatError):
    """Unreadable or malformed file content (rasters, caches, manifests)."""


class NumericalError(SlatError):
    """Solver divergence, domain violations, degenerate operators."""
