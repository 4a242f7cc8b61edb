"""Exception hierarchy shared across the package."""


class PpcaError(Exception):
    """Base class for all errors raised by ppca_quotient."""


class InvalidInputError(PpcaError, ValueError):
    """Malformed input: wrong shape, non-finite entries, bad ranks."""


class DomainError(PpcaError, ValueError):
    """Argument outside the mathematical domain (e.g. a nonpositive variance)."""


class DegenerateDataError(PpcaError, ArithmeticError):
    """Data too degenerate for the closed-form estimator."""


class NumericalError(PpcaError, ArithmeticError):
    """A numerical kernel failed its own post-condition check."""


class OracleConvergenceError(NumericalError):
    """The numerical optimizer exhausted its budget.

    ``best`` holds the best parameter found and ``best_loglik`` its value.
    """

    def __init__(self, message, best=None, best_loglik=None):
        super().__init__(message)
        self.best = best
        self.best_loglik = best_loglik


class ConfigurationError(PpcaError, ValueError):
    """Invalid experiment configuration."""
