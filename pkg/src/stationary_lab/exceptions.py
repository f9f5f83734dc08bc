"""Exception hierarchy for the stationary measure laboratory"""


class LabError(Exception):
    """Base class for all laboratory errors"""

    exit_code = 1


class ConfigError(LabError, ValueError):
    """Malformed, missing or inconsistent configuration"""

    exit_code = 3


class PreconditionError(LabError, ValueError):
    """An operation was called outside its domain"""

    exit_code = 4


class DimensionError(PreconditionError):
    """Matrix or point dimensions do not match"""


class PeriodicityError(PreconditionError):
    """A lattice distribution is supported on a proper sublattice"""

    def __init__(self, period: int, message: str = None):
        self.period = period
        super().__init__(message or f"Distribution is periodic with period {period}")


class MemoryGuardError(PreconditionError):
    """A dynamic-programming table would exceed the support limit"""


class GapError(LabError, ArithmeticError):
    """Missing singular-value gap: the product is not generic enough"""

    exit_code = 5


class NumericalRangeError(LabError, ArithmeticError):
    """A quantity left the range representable in floating point"""

    exit_code = 5
