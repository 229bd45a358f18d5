"""Exception types raised across the package."""


class FastTLSError(Exception):
    """Base class for all package errors."""


class DimensionError(FastTLSError, ValueError):
    pass


class DegenerateInputError(FastTLSError, ValueError):
    pass


class FactorizationError(FastTLSError, RuntimeError):
    def __init__(self, shape, message="SVD did not converge"):
        self.shape = tuple(shape)
        super().__init__(f"{message} for matrix of shape {self.shape}")


class IrreparableRankError(FastTLSError, RuntimeError):
    """The sketched system cannot be made exactly solvable."""


class CorruptedStateError(FastTLSError, RuntimeError):
    pass


class IngestionError(FastTLSError, ValueError):
    def __init__(self, message, row=None, col=None):
        self.row = row
        self.col = col
        where = []
        if row is not None:
            where.append(f"row {row}")
        if col is not None:
            where.append(f"column {col}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class BoostingError(FastTLSError, RuntimeError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__(
            f"all {len(self.errors)} runs failed; first error: {self.errors[0]!r}"
        )
