"""Exception types raised by the chain simulation and control modules."""


class ChainError(Exception):
    """Base class for all package-specific errors."""


class NonMonotoneError(ChainError, ValueError):
    """Access points are not strictly increasing."""


class UncoveredError(ChainError, ValueError):
    """No access point reaches the right end of the domain."""


class BadParamError(ChainError, ValueError):
    """A scalar parameter is outside its admissible range."""


class SupportOutOfDomainError(ChainError, ValueError):
    """Requested initial-value support sticks out of [0, L]."""


class BadIntervalError(ChainError, ValueError):
    """Interval bounds are degenerate or outside the domain."""


class NoSufficientGapError(ChainError, ValueError):
    """Layout has no access-point gap long enough for a certificate."""


class GridMisalignedError(ChainError, ValueError):
    """Grid spacing does not divide the domain or the access points."""


class GridMismatchError(ChainError, ValueError):
    """Two discrete objects live on different grids."""


class NegativeTimeError(ChainError, ValueError):
    """Evaluation time is negative."""


class BcMismatchError(ChainError, ValueError):
    """Boundary-condition kind is unknown or inconsistent."""


class BadInitialDataError(ChainError, ValueError):
    """Initial data fails the regularity required by the solver."""


class EmptyTrajectoryError(ChainError, ValueError):
    """Trajectory holds too few time slices for the requested operation."""


class SingularSystemError(ChainError, RuntimeError):
    """Sparse factorization failed or produced non-finite values."""


class ProblemTooLargeError(ChainError, MemoryError):
    """Discrete problem exceeds the configured unknown budget."""
