"""Exception types shared across the package."""


class BlidError(Exception):
    """Base class for all package errors."""


class DomainError(BlidError, ValueError):
    """A point lies outside the domain of a grid function."""


class ArgumentError(BlidError, ValueError):
    """An argument violates an operation's precondition."""


class StateError(BlidError, RuntimeError):
    """An object is missing data required by the operation (e.g. an uncertified bound)."""


class CapacityError(BlidError, ValueError):
    """A truncation index is too small for the requested construction."""

    def __init__(self, message, needed=None):
        super().__init__(message)
        self.needed = needed


class DomainFault(BlidError, RuntimeError):
    """A local map was applied outside its ball of definition."""


class ConfigurationError(BlidError, ValueError):
    """Inconsistent experiment or problem configuration."""


class ConvergenceError(BlidError, RuntimeError):
    """An iterative solver did not converge."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])
