"""Exception hierarchy.

Validation problems derive from ``ValidationError`` (CLI exit code 2),
numerical failures from ``NumericalError`` (CLI exit code 3).
"""


class SkorokhodError(Exception):
    """Base class for all library errors."""


class ValidationError(SkorokhodError, ValueError):
    pass


class NumericalError(SkorokhodError, ArithmeticError):
    pass


# measure
class NonCentred(ValidationError):
    pass


class MassNotOne(ValidationError):
    pass


class DegenerateDelta0(ValidationError):
    pass


class InfiniteFirstMoment(ValidationError):
    pass


class ArbitrageViolation(ValidationError):
    pass


# boundary
class NonIntegrableBoundary(ValidationError):
    pass


class NoMassBelow(ValidationError):
    pass


# certificate
class UnclassifiedPayoff(ValidationError):
    pass


class NonIntegrableCertificate(NumericalError):
    pass


class InequalityViolation(NumericalError):
    def __init__(self, message, worst=None):
        super().__init__(message)
        self.worst = worst


# simulate
class TruncationDominates(NumericalError):
    def __init__(self, message, fraction=None):
        super().__init__(message)
        self.fraction = fraction


# convergence
class UnknownFixture(ValidationError):
    pass


# varswap
class UnsupportedMeasure(ValidationError):
    pass


# diffusion
class QuadratureFailure(NumericalError):
    pass


class NonCentredPushforward(ValidationError):
    pass
