"""Exception types shared across the package."""


class FieldMpsError(Exception):
    """Base class for all package errors."""


class InputError(FieldMpsError):
    """Invalid input data: zero fields, malformed files, bad parameters."""


class ShapeError(FieldMpsError):
    """Mismatched array shapes or site counts."""


class SizeLimitError(FieldMpsError):
    """A dense or contraction size limit would be exceeded."""


class NumericalError(FieldMpsError):
    """A numerical routine failed (e.g. SVD non-convergence) or a
    consistency check was violated.  Carries context in the message."""
