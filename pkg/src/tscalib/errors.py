"""Exception types shared across the package."""


class FactorizationFailure(RuntimeError):
    """A correlation matrix could not be Cholesky-factorized even after
    the jitter escalation ladder."""


class DomainError(ValueError):
    """A function was evaluated outside its admissible domain."""


class NoBracket(RuntimeError):
    """The saddlepoint equation has no root on the search interval,
    which signals a numerically degenerate predictive distribution."""


class SimulatorFailure(RuntimeError):
    """A simulator evaluation failed.  Carries the offending input."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class ConfigError(ValueError):
    """A study configuration file is malformed."""
