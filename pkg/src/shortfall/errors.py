"""Exception hierarchy shared across the package."""


class ShortfallError(Exception):
    """Base class for every error raised by :mod:`shortfall`."""


class DomainOverflow(ShortfallError, ArithmeticError):
    """A loss evaluation overflowed the float64 range."""


class NotDifferentiable(ShortfallError, ValueError):
    """Second derivative requested at a kink of a piecewise loss."""


class EtaNonpositive(ShortfallError, ValueError):
    """The infimum of the loss derivative on an interval is zero."""


class WrongKind(ShortfallError, TypeError):
    """Operation not supported for this model kind."""


class ThetaOutOfDomain(ShortfallError, ValueError):
    """Parameter outside the model's theta domain."""


class NoSignChange(ShortfallError, ValueError):
    """Empirical root function does not change sign across the bracket."""


class BracketNotFound(ShortfallError, RuntimeError):
    """Doubling search failed to find a valid bracket."""


class BmBelowEta(ShortfallError, ArithmeticError):
    """Denominator of the derivative estimate fell below the eta guard.

    ``k`` is the optimizer iteration at which it happened, when known.
    """

    def __init__(self, message, b_m=None, k=None):
        super().__init__(message)
        self.b_m = b_m
        self.k = k


class RegimeViolation(ShortfallError, ValueError):
    """Parameters violate the hypotheses of the requested bound."""


class CaseMismatch(ShortfallError, ValueError):
    """Step-size exponent inconsistent with the requested bound case."""


class NonPositiveValue(ShortfallError, ValueError):
    """Log-log fit received a non-positive coordinate."""


class SchemaMismatch(ShortfallError, ValueError):
    """CSV header does not match the expected schema."""


class OracleUnavailable(ShortfallError, LookupError):
    """No closed-form reference value exists for this configuration."""


class ConfigError(ShortfallError, ValueError):
    """Experiment configuration failed validation."""
