"""Exception types raised by the hybrid advection library."""

from typing import Optional, Sequence


class OutOfDomainError(ValueError):
    """A query point lies outside the computational domain."""

    def __init__(self, message: str, indices: Optional[Sequence[int]] = None):
        super().__init__(message)
        self.indices = list(indices) if indices is not None else []


class RegridError(RuntimeError):
    """The regrid loop did not reach a fixed leaf set."""


class PreconditionError(ValueError):
    """A solver was called outside the conditions it was built for."""


class FitError(ValueError):
    """Preprocessing statistics could not be fitted."""


class ModelFormatError(ValueError):
    """A model document is malformed or inconsistent."""


class TrainingError(RuntimeError):
    """Network training hit a non-recoverable numerical problem."""
