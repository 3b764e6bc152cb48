"""Shared exception types."""


class ThinlimError(Exception):
    """Base class for all package errors."""


class EmptyDomainError(ThinlimError):
    """An operation produced or required a nonempty region and got an empty one."""


class OutsideDomainError(ThinlimError):
    """A query point lies outside the domain of the evaluated object."""


class NonConvexDomainError(ThinlimError):
    """A convex polygon was required but the input is not convex."""


class AllInfiniteError(ThinlimError):
    """A grid function is identically +inf where finite values are required."""


class InfeasibleError(ThinlimError):
    """Boundary data admits no field satisfying the gradient constraints."""


class FormatError(ThinlimError):
    """A file or descriptor could not be parsed."""
