"""Regularization kernels on T^m x T^m.

The basic family is a wrapped Gaussian bump mixed with a constant floor,

    K(z, zeta) = alpha * w_eps(z - zeta) + (1 - alpha),

which is smooth, strictly positive and integrates to one in ``z``.  On a
grid the bump is renormalized so that the rectangle-rule mean of every row
is exactly one; ``kernel_eval`` gives the continuous version.

Besides the plain bump there is a ``constant`` family (K = 1, the limit
alpha = 0, useful for degeneracy checks) and ``mixture`` kernels, which blend
several bumps with smooth periodic partition-of-unity weights in zeta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .geometry import periodic_displacement, wrap

# Gaussian terms below this (relative to the peak value 1) are dropped; the
# compiled core stops its outward recurrence at the same threshold.
TAIL_CUTOFF = 1e-22


@dataclass(frozen=True)
class KernelSpec:
    family: str = "gaussian"
    epsilon: float = 0.05
    alpha: float = 0.9
    wraps: int = 5
    components: tuple = ()
    centers: tuple = ()
    power: int = 2

    def __post_init__(self):
        if self.family not in ("gaussian", "constant", "mixture"):
            raise ConfigError("kernel.family", f"unknown kernel family {self.family!r}")
        if self.family == "gaussian":
            if not 0.0 < self.epsilon < 1.0:
                raise ConfigError("kernel.epsilon", "epsilon must lie in (0,1)")
            if not 0.0 < self.alpha <= 1.0:
                raise ConfigError("kernel.alpha", "alpha must lie in (0,1]")
        if int(self.wraps) != self.wraps or self.wraps < 3:
            raise ConfigError("kernel.wraps", "wraps must be an integer >= 3")
        if self.family == "mixture":
            if not self.components or len(self.components) != len(self.centers):
                raise ConfigError("kernel.components",
                                  "mixture needs one center per component")
            for c in self.components:
                if c.family != "gaussian":
                    raise ConfigError("kernel.components",
                                      "mixture components must be gaussian")
            if self.power < 1:
                raise ConfigError("kernel.power", "power must be >= 1")

    @classmethod
    def constant(cls) -> "KernelSpec":
        return cls(family="constant")

    def parts(self):
        """(epsilons, alphas, centers) of the Gaussian components."""
        if self.family == "gaussian":
            return (np.array([self.epsilon]), np.array([self.alpha]), np.array([0.0]))
        if self.family == "constant":
            # alpha = 0 turns the bump off exactly, leaving the floor 1
            return np.array([0.5]), np.array([0.0]), np.array([0.0])
        eps = np.array([c.epsilon for c in self.components])
        alpha = np.array([c.alpha for c in self.components])
        return eps, alpha, np.array(self.centers, dtype=float)


def mixture_weights(spec: KernelSpec, zeta) -> np.ndarray:
    """Raised-cosine partition of unity in the first coordinate of zeta."""
    eps, alpha, centers = spec.parts()
    if len(centers) == 1:
        return np.ones(1)
    z1 = float(np.atleast_1d(zeta)[0])
    raw = (1.0 + np.cos(2.0 * np.pi * (z1 - centers))) ** spec.power
    return raw / raw.sum()


def _wrapped_terms(offsets, eps, wraps):
    """Sum over periodic images of exp(-(offset + k)^2 / 2 eps^2)."""
    k = np.arange(-wraps, wraps + 1, dtype=float)
    u = np.asarray(offsets, dtype=float)[..., None] + k
    e = np.exp(-(u * u) / (2.0 * eps * eps))
    e = np.where(e < TAIL_CUTOFF, 0.0, e)
    return e.sum(axis=-1), (e * u).sum(axis=-1)


def _bump_1d(eps, wraps, delta):
    """Continuous wrapped Gaussian density, exactly normalized over the torus."""
    g, _ = _wrapped_terms(delta, eps, wraps)
    norm = eps * math.sqrt(2.0 * math.pi) * math.erf((wraps + 0.5) / (eps * math.sqrt(2.0)))
    return g / norm


def kernel_eval(spec: KernelSpec, z, zeta) -> np.ndarray:
    """Continuous K(z, zeta); z and zeta broadcast over leading axes."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    if z.shape[-1] != zeta.shape[-1]:
        raise DimensionError("z and zeta must have the same dimension")
    zb, zetab = np.broadcast_arrays(z, zeta)
    delta = periodic_displacement(wrap(zb), wrap(zetab))
    eps, alpha, _ = spec.parts()
    theta = mixture_weights(spec, zeta.reshape(-1, zeta.shape[-1])[0]) \
        if zeta.ndim == 1 else None
    out = 0.0
    for n in range(len(eps)):
        bump = np.prod(_bump_1d(eps[n], spec.wraps, delta), axis=-1)
        comp = alpha[n] * bump + (1.0 - alpha[n])
        if theta is None:
            th = np.array([mixture_weights(spec, zz)[n] for zz in zetab.reshape(-1, zb.shape[-1])])
            th = th.reshape(comp.shape)
        else:
            th = theta[n]
        out = out + th * comp
    return out


def _grid_bump(eps, wraps, G, zeta1):
    """Unnormalized wrapped Gaussian and its z-derivative factor on the grid."""
    nodes = np.arange(G) / G
    delta = periodic_displacement(nodes, np.full(G, zeta1))
    return _wrapped_terms(delta, eps, wraps)


def _rows(spec, G, zeta, m, derivative):
    zeta = wrap(np.atleast_1d(np.asarray(zeta, dtype=float)))
    if zeta.shape != (m,):
        raise DimensionError(f"zeta must have shape ({m},)")
    eps, alpha, _ = spec.parts()
    theta = mixture_weights(spec, zeta)
    row = np.zeros((G,) * m)
    drow = np.zeros(G) if derivative else None
    for n in range(len(eps)):
        if alpha[n] == 0.0:
            row += theta[n] * 1.0
            continue
        factors = []
        for j in range(m):
            g, gu = _grid_bump(eps[n], spec.wraps, G, zeta[j])
            mean = g.sum() / G
            factors.append((g / mean, gu / mean))
        prod = factors[0][0]
        for f in factors[1:]:
            prod = np.multiply.outer(prod, f[0])
        row += theta[n] * (alpha[n] * prod + (1.0 - alpha[n]))
        if derivative:
            # d/dz of exp(-u^2/2eps^2) is -u/eps^2 times the term
            drow += theta[n] * alpha[n] * (-factors[0][1] / eps[n] ** 2)
    return row, drow


def kernel_row(spec: KernelSpec, G: int, zeta, m: int = 1) -> np.ndarray:
    """K(z_g, zeta) on the uniform grid with G nodes per axis, mean exactly one."""
    row, _ = _rows(spec, G, zeta, m, False)
    return row


def kernel_drow(spec: KernelSpec, G: int, zeta) -> np.ndarray:
    """d/dz K(z_g, zeta) on a one-dimensional grid (mixture weights held fixed)."""
    _, drow = _rows(spec, G, zeta, 1, True)
    return drow


def kernel_min_max(spec: KernelSpec, grid_size: int, m: int = 1, samples: int = 1024,
                   margin: float = 1e-6):
    """Bounds (m(K), M0(K), M1(K)) over all grid rows.

    Rows for zeta shifted by a whole grid cell are permutations of each
    other, so scanning ``samples`` sub-cell offsets covers every zeta up to
    sampling error; ``margin`` widens the result to absorb it.  On T^2 the
    row is a product of identical one-dimensional factors, so the diagonal
    offsets (s, s) already reach the extremes.  The constant kernel is exact.
    """
    if grid_size < 16:
        raise ConfigError("grid.size", "grid_size must be >= 16")
    if spec.family == "constant":
        return 1.0, 1.0, 0.0
    if spec.family == "mixture":
        # a mixture row is a convex combination of component rows, so the
        # componentwise extremes bound it
        parts = [kernel_min_max(c, grid_size, m, samples, margin) for c in spec.components]
        return (min(p[0] for p in parts), max(p[1] for p in parts),
                max(p[2] for p in parts))
    G = grid_size
    lo, hi, d1 = np.inf, 0.0, 0.0
    for s in np.arange(samples) / (samples * G):
        z = np.full(m, s)
        row = kernel_row(spec, G, z, m)
        lo = min(lo, row.min())
        hi = max(hi, row.max())
        if m == 1:
            d1 = max(d1, np.abs(kernel_drow(spec, G, z)).max())
    return lo * (1.0 - margin), hi * (1.0 + margin), d1 * (1.0 + margin)
