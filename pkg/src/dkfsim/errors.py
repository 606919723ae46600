"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, OSError -> 2,
NumericError -> 3.
"""


class ConfigError(ValueError):
    """Invalid configuration or parameters; names the offending keys."""

    def __init__(self, message, keys=()):
        super().__init__(message)
        self.keys = tuple(keys)


class HorizonError(ConfigError):
    """A step index fell outside the available transition table."""


class SelectionError(ConfigError):
    """A node subset was empty or referenced unknown node ids."""


class NumericError(ArithmeticError):
    """A numerical computation produced a non-finite or unusable result."""


class DivergenceError(NumericError):
    """A simulated state became non-finite; carries the offending step."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SingularInformationError(NumericError):
    """An information matrix was singular where an inverse was required."""


class MetricError(ValueError):
    """A metric is undefined for the given trajectories."""


class OrderingError(ValueError):
    """A required positive-semidefinite ordering between inputs is violated."""
