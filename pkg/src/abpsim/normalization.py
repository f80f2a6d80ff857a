"""Normalization operators n(f) for positive grid functions and F = f / n(f).

All integrals over the torus use the periodic rectangle rule, i.e. the plain
mean of the grid values.  Every built-in operator is positively homogeneous,
1-Lipschitz in the sup norm and sandwiched between min f and max f.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .geometry import wrap

KINDS = ("l1", "lq", "point", "min", "max")
# integer codes shared with the compiled core
KIND_CODES = {"l1": 0, "lq": 1, "point": 2, "min": 3, "max": 4}


@dataclass(frozen=True)
class NormalizationSpec:
    kind: str = "l1"
    q: float = 1.0
    z0: tuple = ()
    k: int | None = None  # smoothing index for min/max

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError("norm.kind", f"unknown normalization {self.kind!r}")
        if self.kind == "lq" and not self.q >= 1.0:
            raise ConfigError("norm.kind", "q must be >= 1")
        if self.kind == "point" and len(self.z0) == 0:
            raise ConfigError("norm.kind", "point normalization needs z0")
        if self.k is not None and (self.kind not in ("min", "max") or self.k < 1):
            raise ConfigError("norm.k", "smoothing index applies to min/max and must be >= 1")

    @classmethod
    def parse(cls, text: str, k: int | None = None) -> "NormalizationSpec":
        """Parse ``l1``, ``lq:<q>``, ``point:<z0>[,<z0b>]``, ``min``, ``max``."""
        head, _, arg = str(text).partition(":")
        try:
            if head == "lq":
                return cls("lq", q=float(arg), k=k)
            if head == "point":
                return cls("point", z0=tuple(float(v) for v in arg.split(",")), k=k)
        except ValueError:
            raise ConfigError("norm.kind", f"malformed normalization {text!r}") from None
        if arg:
            raise ConfigError("norm.kind", f"malformed normalization {text!r}")
        return cls(head, k=k)

    def core_params(self):
        """(code, q) for the compiled loop; smoothed min/max map onto L^q forms."""
        if self.kind == "max" and self.k is not None:
            return KIND_CODES["lq"], float(self.k)
        if self.kind == "min" and self.k is not None:
            return 5, float(self.k)  # 1 / n_q(1/f)
        return KIND_CODES[self.kind], float(self.q)


def _check_positive(f):
    f = np.asarray(f, dtype=float)
    if f.size == 0 or not np.all(np.isfinite(f)) or np.any(f <= 0):
        raise DomainError("normalization needs a finite, strictly positive grid function")
    return f


def pairwise_mean(f) -> float:
    """Mean by repeated halving; exact for constant arrays of power-of-two size."""
    v = np.asarray(f, dtype=float).ravel()
    n = v.size
    while v.size > 1 and v.size % 2 == 0:
        v = v[0::2] + v[1::2]
    return float(v.sum()) / n


def _lq(f, q):
    top = f.max()
    return float(top * np.mean((f / top) ** q) ** (1.0 / q))


def interp_periodic(values, z) -> float:
    """Periodic (multi)linear interpolation of a grid function at z."""
    values = np.asarray(values, dtype=float)
    z = wrap(np.atleast_1d(np.asarray(z, dtype=float)))
    G = values.shape[0]
    m = values.ndim
    s = z * G
    i0 = np.floor(s).astype(int)
    t = s - i0
    out = 0.0
    for corner in range(2 ** m):
        idx, wt = [], 1.0
        for j in range(m):
            bit = (corner >> j) & 1
            idx.append((i0[j] + bit) % G)
            wt *= t[j] if bit else 1.0 - t[j]
        out += wt * values[tuple(idx)]
    return float(out)


def n_value(spec: NormalizationSpec, f) -> float:
    f = _check_positive(f)
    if spec.kind == "l1":
        return pairwise_mean(f)
    if spec.kind == "lq":
        return _lq(f, spec.q)
    if spec.kind == "point":
        if len(spec.z0) != f.ndim:
            raise DomainError("z0 dimension does not match the grid")
        return interp_periodic(f, spec.z0)
    if spec.kind == "max":
        return float(f.max()) if spec.k is None else _lq(f, spec.k)
    return float(f.min()) if spec.k is None else 1.0 / _lq(1.0 / f, spec.k)


def normalize(spec: NormalizationSpec, f) -> np.ndarray:
    f = _check_positive(f)
    return f / n_value(spec, f)


def prob_density(f) -> np.ndarray:
    """f divided by its rectangle-rule integral."""
    f = _check_positive(f)
    return f / pairwise_mean(f)
