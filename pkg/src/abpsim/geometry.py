"""Periodic arithmetic on the flat torus T^d = (R/Z)^d.

Points on the torus are stored as plain float arrays with every coordinate
in [0, 1).  Displacements use the half-open convention [-0.5, 0.5), so the
antipodal tie resolves to -0.5.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, InvalidStateError

__all__ = ["wrap", "periodic_displacement", "torus_distance", "uniform_grid"]


def wrap(x) -> np.ndarray:
    """Reduce coordinates modulo 1 into [0, 1)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidStateError(f"cannot wrap non-finite coordinates {x!r}")
    y = x - np.floor(x)
    # x - floor(x) can round up to exactly 1.0 for tiny negative inputs
    return np.where(y >= 1.0, 0.0, y)


def periodic_displacement(a, b) -> np.ndarray:
    """Shortest signed displacement a - b on the torus, in [-0.5, 0.5)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    d = d - np.floor(d + 0.5)
    return np.where(d >= 0.5, d - 1.0, d)


def torus_distance(a, b) -> float:
    """Euclidean length of the periodic displacement."""
    return float(np.linalg.norm(periodic_displacement(a, b)))


def uniform_grid(n: int) -> np.ndarray:
    """Nodes k/n, k = 0..n-1, of the uniform grid on T^1."""
    return np.arange(n, dtype=float) / n
