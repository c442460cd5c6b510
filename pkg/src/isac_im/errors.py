"""Exception types shared across the package."""


class IsacError(Exception):
    """Base class for all package errors."""


class InvalidArgument(IsacError, ValueError):
    pass


class InvalidTopology(IsacError, ValueError):
    pass


class InfeasiblePilotCount(IsacError, ValueError):
    pass


class RankDeficientPilots(IsacError, ValueError):
    pass


class ConvergenceFailure(IsacError, RuntimeError):
    pass


class DegenerateChannel(IsacError, RuntimeError):
    """A channel draw made a null space come out with the wrong dimension."""


class PowerViolation(IsacError, ValueError):
    pass


class InfeasibleScheme(IsacError, ValueError):
    """Parameters for which the scheme has nothing to offer (e.g. m <= K)."""


class ConfigError(IsacError, ValueError):
    pass


class CapExceeded(IsacError, RuntimeError):
    """Too many degenerate channel draws during a sweep."""
