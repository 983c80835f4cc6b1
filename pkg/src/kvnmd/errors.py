"""Exception hierarchy shared by all modules.

The CLI maps each family onto an exit code, so library code should raise
the most specific class that applies.
"""


class KvnError(Exception):
    """Base class for all library errors."""


class ValidationError(KvnError, ValueError):
    """Bad input: shape, range, normalization or cross-parameter constraint."""


class DomainError(ValidationError):
    """Argument outside the mathematical domain of an operation."""


class StencilOverlapError(ValidationError):
    """A finite-difference stencil would wrap onto itself (2d >= g)."""


class NumericalError(KvnError, ArithmeticError):
    """A numerical routine failed to reach its tolerance."""


class ResourceCapError(KvnError):
    """A configured size cap (dense dimension, table size, ...) was exceeded."""
