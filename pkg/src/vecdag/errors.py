"""Exception types shared across the package."""


class VecdagError(Exception):
    """Base class for all package errors."""


class SingularSystem(VecdagError):
    """A Vandermonde or covariance system is numerically singular."""


class PoolTooSmall(VecdagError):
    """A coordinate pool has fewer values than the interpolation order needs."""


class NotAGrid(VecdagError):
    """Input points do not form the expected tensor lattice."""


class DuplicatePoints(VecdagError):
    """A point set contains coinciding points."""


class NearSingularParents(VecdagError):
    """A parent covariance matrix failed its Cholesky factorization."""

    def __init__(self, message: str, node_index: int | None = None):
        super().__init__(message)
        self.node_index = node_index


class CapExceeded(VecdagError):
    """A dense desk-scale computation was requested above its size cap."""


class NotConverged(VecdagError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NotPSD(VecdagError):
    """A matrix required to be positive semidefinite is not, beyond tolerance."""


class OutOfSupport(VecdagError):
    """A parameter value lies outside the support of its prior."""


class EmptyTrace(VecdagError):
    """A posterior summary was requested for an empty trace."""


class UnsupportedAlpha(VecdagError):
    """Kernel regularity outside the numerically stable range."""


class UnsupportedOrder(VecdagError):
    """An interpolation order this diagnostic does not cover."""
