"""Exception hierarchy. ``exit_code`` is what the CLI returns when one escapes."""


class RocketError(ValueError):
    exit_code = 1


class ConfigError(RocketError):
    exit_code = 2


class DataError(RocketError):
    exit_code = 3


class NumericalError(RocketError):
    exit_code = 4


# data problems
class LengthMismatch(DataError):
    pass


class TooFewSamples(DataError):
    pass


class ConstantColumn(DataError):
    pass


class InsufficientRows(DataError):
    pass


class RateOutOfRange(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class DegenerateIndicator(DataError):
    pass


# numerical problems
class NonPositiveDiagonal(NumericalError):
    pass


class IllConditioned(NumericalError):
    def __init__(self, message: str, condition: float = float("inf")):
        super().__init__(message)
        self.condition = condition


class SingularTheta(NumericalError):
    pass


class DimensionTooLarge(NumericalError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class CholeskyFailure(NumericalError):
    pass


class NonUnitDiagonal(NumericalError):
    pass


class RadiusExceeded(NumericalError):
    pass


class NotConverged(NumericalError):
    pass


class ZeroVariance(NumericalError):
    pass


class DegenerateDenominator(NumericalError):
    pass
