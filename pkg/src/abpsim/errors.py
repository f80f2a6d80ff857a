"""Exception hierarchy shared by the simulation modules and the CLI."""


class ABPError(Exception):
    """Base class for all package errors."""


class InvalidStateError(ABPError, ValueError):
    """A state or input value is non-finite or otherwise unusable."""


class DimensionError(ABPError, ValueError):
    pass


class DomainError(ABPError, ValueError):
    """An argument lies outside the domain of an operator (e.g. f <= 0)."""


class ConfigError(ABPError, ValueError):
    """Invalid experiment configuration.  ``key`` is the dotted key path."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class NumericalBlowup(ABPError, FloatingPointError):
    """A trajectory produced non-finite values."""

    def __init__(self, message: str, step: int | None = None, t: float | None = None,
                 state=None):
        self.step = step
        self.t = t
        self.state = state
        super().__init__(message)


class BoundViolation(ABPError, AssertionError):
    """The normalized bias left the a-priori interval [bound_m, bound_M0]."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message)


class UnsupportedError(ABPError, NotImplementedError):
    pass
