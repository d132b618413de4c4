"""Exception types shared across the package."""


class BouncyError(Exception):
    """Base class for all errors raised by this package."""


class ZeroGradient(BouncyError):
    """A reflection was requested against a (numerically) zero gradient."""


class DegenerateStart(BouncyError):
    """Dynamics started from a state where the bounce direction is ill-defined."""


class RootBracketFailure(BouncyError):
    """A sign change detected during scanning could not be confirmed by the polisher."""


class EventStorm(BouncyError):
    """More events occurred in one trajectory than the configured maximum."""


class Infeasible(BouncyError):
    """A position violates a hard constraint."""


class NotLogConcave(BouncyError):
    """Negative curvature was detected where convexity was assumed."""


class NotPSD(BouncyError):
    """A matrix assumed positive semi-definite produced a negative Rayleigh quotient."""


class Unsupported(BouncyError):
    """The target does not provide the capability requested by the caller."""


class DegenerateSeries(BouncyError):
    """A chain column has (numerically) zero variance."""


class ParseError(BouncyError):
    """A data or configuration file failed validation."""


class EmptyFile(ParseError):
    """An input file contains no data rows."""
