"""Grid representation of the adaptive bias.

``h`` accumulates kernel rows deposited along the trajectory,
``F = h / n(h)`` is the normalized weight function and
``A = -log(F / mean F) = -log(h / mean h)`` is the bias.  Gradients of A use
centered differences at the nodes followed by periodic linear interpolation.

The a-priori bounds follow from two facts: every row lies between m(K) and
M0(K), and every built-in normalization is sandwiched between min h and
max h.  Hence ``h_t`` stays between ``min h_0 + theta m(K)`` and
``max h_0 + theta M0(K)``, which bounds F = h / n(h) uniformly in time.
"""
from __future__ import annotations

import numpy as np

from .errors import BoundViolation, ConfigError, DimensionError, DomainError
from .geometry import wrap
from .kernel import KernelSpec, kernel_drow, kernel_min_max, kernel_row
from .normalization import NormalizationSpec, interp_periodic, n_value, pairwise_mean


class Mu0:
    """Initial weighted measure: (weight, collective-variable value) atoms, or the
    uniform measure."""

    def __init__(self, atoms=None, uniform: bool = False):
        self.uniform = uniform
        self.atoms = list(atoms or [])
        if not uniform and not self.atoms:
            raise ConfigError("mu0", "initial measure is empty")
        if self.atoms:
            total = sum(w for w, _ in self.atoms)
            if not total > 0:
                raise ConfigError("mu0", "atom weights must be positive")
            self.atoms = [(w / total, np.atleast_1d(np.asarray(z, dtype=float)))
                          for w, z in self.atoms]

    @classmethod
    def atom(cls, z) -> "Mu0":
        return cls([(1.0, z)])


class BiasGrid:
    """Accumulated kernel density h on a uniform grid of T^m (m = 1 or 2)."""

    def __init__(self, kernel: KernelSpec, norm: NormalizationSpec, G: int, m: int = 1,
                 track_derivative: bool = False):
        if m not in (1, 2):
            raise DimensionError("bias grids support m = 1 or 2")
        if G < 16:
            raise ConfigError("grid.size", "grid size must be >= 16")
        if track_derivative and m != 1:
            raise ConfigError("estimators.mean_force", "mean force needs m = 1")
        self.kernel, self.norm, self.G, self.m = kernel, norm, int(G), m
        self.h = np.ones((G,) * m)
        self.dh = np.zeros(G) if track_derivative else None
        self.theta = 0.0
        self.fixed = False
        self.bound_m = self.bound_M0 = self.bound_M1 = None
        self.kernel_bounds = None
        self.violations = 0

    # -- construction ----------------------------------------------------
    @classmethod
    def init(cls, kernel, norm, mu0: Mu0, G: int, m: int = 1, track_derivative=False,
             kernel_bounds=None) -> "BiasGrid":
        grid = cls(kernel, norm, G, m, track_derivative)
        if mu0.uniform:
            grid.h = np.ones((G,) * m)
        else:
            grid.h = np.zeros((G,) * m)
            for w, z in mu0.atoms:
                grid.h += w * kernel_row(kernel, G, z, m)
                if grid.dh is not None:
                    grid.dh += w * kernel_drow(kernel, G, z)
        grid.kernel_bounds = kernel_bounds or kernel_min_max(kernel, G, m)
        grid._set_bounds()
        grid.check_bounds()
        return grid

    @classmethod
    def from_bias(cls, A, norm: NormalizationSpec | None = None) -> "BiasGrid":
        """Frozen grid with h = exp(-A); used for non-adaptive runs."""
        A = np.asarray(A, dtype=float)
        if not np.all(np.isfinite(A)):
            raise DomainError("fixed bias must be finite on the grid")
        grid = cls(KernelSpec.constant(), norm or NormalizationSpec(), A.shape[0], A.ndim)
        grid.h = np.exp(-A)
        grid.fixed = True
        F = grid.F
        grid.bound_m, grid.bound_M0, grid.bound_M1 = float(F.min()), float(F.max()), np.inf
        return grid

    def _set_bounds(self):
        mK, MK, MK1 = self.kernel_bounds
        h0min, h0max = float(self.h.min()), float(self.h.max())
        lo, hi = min(h0min, mK), max(h0max, MK)
        self.bound_m = lo / hi
        self.bound_M0 = hi / lo
        d0 = 0.0 if self.dh is None else float(np.abs(self.dh).max())
        self.bound_M1 = max(d0, MK1) / lo

    def copy(self) -> "BiasGrid":
        new = object.__new__(BiasGrid)
        new.__dict__.update(self.__dict__)
        new.h = self.h.copy()
        new.dh = None if self.dh is None else self.dh.copy()
        return new

    # -- derived fields --------------------------------------------------
    @property
    def spacing(self) -> float:
        return 1.0 / self.G

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.G) / self.G

    @property
    def n(self) -> float:
        return n_value(self.norm, self.h)

    @property
    def F(self) -> np.ndarray:
        return self.h / self.n

    @property
    def A(self) -> np.ndarray:
        return -np.log(self.h / pairwise_mean(self.h))

    @property
    def dA(self) -> np.ndarray:
        """Centered differences of A; shape (m, G, ...)."""
        logh = np.log(self.h)
        out = [(np.roll(logh, 1, axis=j) - np.roll(logh, -1, axis=j)) / (2 * self.spacing)
               for j in range(self.m)]
        return np.array(out)

    # -- updates ---------------------------------------------------------
    def deposit(self, z_hit, w: float, dt: float, check: bool = True):
        if self.fixed:
            raise ConfigError("bias", "cannot deposit into a fixed bias")
        if not (w > 0 and dt > 0):
            raise DomainError("deposit weight and time step must be positive")
        z_hit = wrap(np.atleast_1d(z_hit))
        self.h += (w * dt) * kernel_row(self.kernel, self.G, z_hit, self.m)
        if self.dh is not None:
            self.dh += (w * dt) * kernel_drow(self.kernel, self.G, z_hit)
        self.theta += w * dt
        if check:
            self.check_bounds()

    def check_bounds(self, step: int | None = None):
        F = self.F
        if F.min() < self.bound_m or F.max() > self.bound_M0:
            self.violations += 1
            raise BoundViolation(
                f"F left [{self.bound_m:.6g}, {self.bound_M0:.6g}]: "
                f"min {F.min():.6g}, max {F.max():.6g}", step)

    # -- evaluation ------------------------------------------------------
    def F_at(self, z) -> float:
        return interp_periodic(self.h, z) / self.n

    def value(self, z) -> float:
        return interp_periodic(self.A, z)

    def gradient(self, z) -> np.ndarray:
        dA = self.dA
        return np.array([interp_periodic(dA[j], z) for j in range(self.m)])

    def mean_force(self, z) -> float:
        """-dh/h at z, both interpolated; the derivative of A from kernel rows."""
        if self.dh is None:
            raise ConfigError("estimators.mean_force", "mean-force accumulation is disabled")
        return -interp_periodic(self.dh, z) / interp_periodic(self.h, z)

    # -- export ----------------------------------------------------------
    def table(self) -> tuple[list[str], np.ndarray]:
        """Columns z_1..z_m, h, F, A, dA_1..dA_m, one row per node."""
        axes = np.meshgrid(*[self.nodes] * self.m, indexing="ij")
        cols = [a.ravel() for a in axes] + [self.h.ravel(), self.F.ravel(), self.A.ravel()]
        cols += [d.ravel() for d in self.dA]
        names = [f"z_{j + 1}" for j in range(self.m)] + ["h", "F", "A"]
        names += [f"dA_{j + 1}" for j in range(self.m)]
        return names, np.column_stack(cols)


def bias_value(grid: BiasGrid, z) -> float:
    return grid.value(z)


def bias_gradient(grid: BiasGrid, z) -> np.ndarray:
    return grid.gradient(z)


def init_bias(kernel, norm, mu0, G, m=1, **kw) -> BiasGrid:
    return BiasGrid.init(kernel, norm, mu0, G, m, **kw)


def deposit(grid: BiasGrid, z_hit, w, dt):
    grid.deposit(z_hit, w, dt)
