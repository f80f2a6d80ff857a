"""Adaptive biasing-potential sampling for metastable diffusions."""

__version__ = "0.1.0"

from ._backend import available as available_backends  # noqa: E402
from .errors import (ABPError, BoundViolation, ConfigError, DimensionError,  # noqa: E402
                     DomainError, InvalidStateError, NumericalBlowup, UnsupportedError)

__all__ = [
    "__version__", "available_backends", "ABPError", "BoundViolation", "ConfigError",
    "DimensionError", "DomainError", "InvalidStateError", "NumericalBlowup",
    "UnsupportedError",
]
