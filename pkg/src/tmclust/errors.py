"""Exception types shared across the package."""


class TmclustError(Exception):
    """Base class for errors raised by tmclust."""


class NotPositiveDefiniteError(TmclustError):
    """A scale matrix failed its Cholesky factorization.

    ``dim`` is the 1-based dimension index of the offending matrix when
    known, else ``None``.
    """

    def __init__(self, message: str, dim: int | None = None):
        super().__init__(message)
        self.dim = dim


class SingularScaleError(TmclustError):
    """A scale matrix stayed non-positive-definite after regularization."""

    def __init__(self, message: str, group: int | None = None, dim: int | None = None):
        super().__init__(message)
        self.group = group
        self.dim = dim


class EmptyComponentError(TmclustError):
    """A mixture component's effective sample size collapsed to ~zero."""

    def __init__(self, message: str, group: int | None = None, iteration: int | None = None):
        super().__init__(message)
        self.group = group
        self.iteration = iteration


class DataFormatError(TmclustError):
    """A dataset file or manifest violates its format contract."""
