"""Exception hierarchy shared by the library and the command line."""


class BScalingError(Exception):
    """Base class. ``exit_code`` is what the CLI returns for this failure."""

    exit_code = 3


class DataError(BScalingError):
    exit_code = 2


class DegenerateMeasurement(DataError):
    """A measurement is constant, or its knots collapsed too far to fit."""


class InsufficientData(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class ZeroVariance(DataError):
    pass


class DomainError(DataError):
    pass


class NonFinite(DataError):
    pass


class NumericalError(BScalingError):
    exit_code = 3


class SingularMatrix(NumericalError):
    pass


class MemoryBudget(NumericalError):
    """Requested asymptotic matrices exceed the configured dimension guard."""


class NegativeVariance(NumericalError):
    pass


class BenchmarkFailure(NumericalError):
    pass
