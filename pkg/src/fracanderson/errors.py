"""Exception hierarchy shared by all modules."""


class FracAndersonError(Exception):
    """Base class for every error raised by this package."""


class InvalidAlpha(FracAndersonError, ValueError):
    pass


class InvalidMass(FracAndersonError, ValueError):
    pass


class AlphaTooLarge(FracAndersonError, ValueError):
    pass


class InvalidS(FracAndersonError, ValueError):
    pass


class SubcriticalS(InvalidS):
    """``s * (d + 2 alpha) <= d``: the step kernel ``|K|^s`` is not summable."""


class BetaTooLarge(FracAndersonError, ValueError):
    pass


class QuadratureDivergence(FracAndersonError, ArithmeticError):
    pass


class RadiusTooSmall(FracAndersonError, ValueError):
    pass


class FitUnstable(FracAndersonError, ArithmeticError):
    pass


class BudgetExceeded(FracAndersonError, RuntimeError):
    pass


class GammaSupercritical(FracAndersonError, ValueError):
    """``gamma * row_sum >= 1``; carries the uncertified partial result."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class SearchExhausted(FracAndersonError, RuntimeError):
    pass


class EmptyGrid(FracAndersonError, ValueError):
    pass


class SolveFailed(FracAndersonError, ArithmeticError):
    pass


class EigFailed(FracAndersonError, ArithmeticError):
    pass


class ConfigInvalid(FracAndersonError, ValueError):
    """Configuration errors; ``violations`` lists every ``(field, message)``."""

    def __init__(self, violations):
        self.violations = list(violations)
        text = "; ".join(f"{field}: {msg}" for field, msg in self.violations)
        super().__init__(text)
