"""Exception hierarchy.

Every error family carries its own ``exit_code`` so the command line tool
can map failures onto distinct process exit statuses.
"""


class AlignTaxError(Exception):
    """Base class for all errors raised by :mod:`aligntax`."""

    exit_code = 1


class UsageError(AlignTaxError):
    """Raised when command line options are inconsistent."""

    exit_code = 2


class ParseError(AlignTaxError):
    """Problem file is not well-formed JSON."""

    exit_code = 3


class SchemaError(AlignTaxError):
    """Problem file is well-formed but misses or mistypes a field."""

    exit_code = 4


class DimensionMismatch(AlignTaxError, ValueError):
    exit_code = 5


class ZeroVector(AlignTaxError, ValueError):
    """A vector is too short to define a direction (degenerate probe or gradient)."""

    exit_code = 6


class InfeasibleTarget(AlignTaxError, ValueError):
    """Requested capability change lies outside the budget."""

    exit_code = 7


class InfeasibleBudget(AlignTaxError, ValueError):
    """Capability constraint alone already exceeds the budget."""

    exit_code = 8


class ConstraintNotInSubspace(AlignTaxError, ValueError):
    exit_code = 9


class NotSPD(AlignTaxError, ValueError):
    """Fisher matrix is not symmetric positive definite."""

    exit_code = 10


class DegenerateProjection(AlignTaxError, ValueError):
    """A safety direction lies (numerically) inside the capability subspace."""

    exit_code = 11


class InvalidSampleCount(AlignTaxError, ValueError):
    exit_code = 12


class SpecInfeasible(AlignTaxError, ValueError):
    """Packing specification cannot be realized."""

    exit_code = 13


class EmptyPairSet(AlignTaxError, ValueError):
    exit_code = 14


class NotSuperposed(AlignTaxError, ValueError):
    """Welch bound requested with fewer features than dimensions."""

    exit_code = 15


class NearOrthogonalityViolated(AlignTaxError, ValueError):
    """Residual bound requested outside its validity region ``m * mu < 1``."""

    exit_code = 16


class InsufficientSeries(AlignTaxError, ValueError):
    exit_code = 17
