"""Potentials, reaction coordinates, and the three finite-dimensional dynamics.

Every potential is a trigonometric series on the coordinates, optionally plus
a confining quadratic term ``quad/2 |x|^2`` for the non-compact case.  This is
the only representation the compiled kernels understand, so tabulated
potentials are converted to their Fourier series on construction.

The inverse temperature is folded into the series (``V_eff = beta V``); all
downstream code uses beta = 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, InvalidStateError
from .geometry import periodic_displacement, wrap

TWO_PI = 2.0 * np.pi

FAMILIES = ("brownian", "langevin", "extended")


@dataclass(frozen=True)
class TrigSeries:
    """f(x) = const + sum_k a_k cos(2 pi n_k.x) + b_k sin(2 pi n_k.x) + quad/2 |x|^2."""

    d: int
    freqs: np.ndarray  # (K, d) integer-valued
    a: np.ndarray
    b: np.ndarray
    const: float = 0.0
    quad: float = 0.0

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=float).reshape(-1, self.d)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(-1))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        if not (len(self.a) == len(self.b) == freqs.shape[0]):
            raise DimensionError("series coefficient arrays disagree in length")

    @classmethod
    def zero(cls, d: int) -> "TrigSeries":
        return cls(d, np.zeros((0, d)), [], [])

    @classmethod
    def from_terms(cls, d, terms, const=0.0, quad=0.0) -> "TrigSeries":
        """Build from ``(coef, freq, 'cos'|'sin')`` triples."""
        freqs, a, b = [], [], []
        for coef, freq, kind in terms:
            freq = list(freq)
            if len(freq) != d:
                raise DimensionError(f"frequency {freq} does not have {d} entries")
            freqs.append(freq)
            a.append(coef if kind == "cos" else 0.0)
            b.append(coef if kind == "sin" else 0.0)
        return cls(d, np.array(freqs, dtype=float).reshape(-1, d), a, b, const, quad)

    def scaled(self, s: float) -> "TrigSeries":
        return TrigSeries(self.d, self.freqs, s * self.a, s * self.b, s * self.const,
                          s * self.quad)

    def _points(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise DimensionError(f"expected last axis of length {self.d}, got {x.shape}")
        return x

    def __call__(self, x) -> np.ndarray:
        x = self._points(x)
        phase = TWO_PI * (x @ self.freqs.T)
        out = self.const + np.cos(phase) @ self.a + np.sin(phase) @ self.b
        if self.quad:
            out = out + 0.5 * self.quad * np.sum(x * x, axis=-1)
        return out

    def grad(self, x) -> np.ndarray:
        x = self._points(x)
        phase = TWO_PI * (x @ self.freqs.T)
        coef = TWO_PI * (-np.sin(phase) * self.a + np.cos(phase) * self.b)
        g = coef @ self.freqs
        if self.quad:
            g = g + self.quad * x
        return g

    def torus_mean(self) -> float:
        """Integral over [0,1)^d (ignores the quadratic term)."""
        zero = np.all(self.freqs == 0, axis=1)
        return float(self.const + self.a[zero].sum())


def series_from_table(values: np.ndarray) -> TrigSeries:
    """Exact trigonometric interpolant of a periodic table on a uniform grid."""
    values = np.asarray(values, dtype=float)
    d = values.ndim
    if d not in (1, 2):
        raise DimensionError("tabulated potentials are supported for d <= 2")
    coeffs = np.fft.fftn(values) / values.size
    shape = values.shape
    ks = [np.fft.fftfreq(n, 1.0 / n).astype(int) for n in shape]
    terms = []
    const = coeffs.real.flat[0]
    for idx in np.ndindex(*shape):
        freq = tuple(ks[j][idx[j]] for j in range(d))
        if all(f == 0 for f in freq):
            continue
        # keep one representative of each +/- pair
        neg = tuple(-f for f in freq)
        if neg < freq and all(2 * abs(f) != n for f, n in zip(freq, shape)):
            continue
        c = coeffs[idx]
        nyquist = any(2 * abs(f) == n for f, n in zip(freq, shape))
        scale = 1.0 if nyquist else 2.0
        # c e^{i th} + conj(c) e^{-i th} = 2 Re(c) cos th - 2 Im(c) sin th
        if abs(c.real) > 1e-15:
            terms.append((scale * c.real, freq, "cos"))
        if abs(c.imag) > 1e-15 and not nyquist:
            terms.append((-scale * c.imag, freq, "sin"))
    return TrigSeries.from_terms(d, terms, const=const)


@dataclass(frozen=True)
class PotentialSpec:
    """Potential V on T^d ('cosine', 'tabulated') or R^d ('quadratic_cosine').

    ``terms`` holds ``(coef, freq, 'cos'|'sin')`` triples; ``quad`` is the
    confining coefficient for the non-compact case.  ``beta`` multiplies
    everything.
    """

    kind: str
    d: int
    terms: tuple = ()
    quad: float = 0.0
    beta: float = 1.0
    table: np.ndarray | None = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("cosine", "quadratic_cosine", "tabulated"):
            raise ConfigError("model.potential.kind", f"unknown potential kind {self.kind!r}")
        if not self.beta > 0:
            raise ConfigError("model.beta", "beta must be positive")
        if self.kind == "quadratic_cosine" and not self.quad > 0:
            raise ConfigError("model.potential.quad",
                              "quadratic_cosine needs a positive confining coefficient")
        if self.kind != "quadratic_cosine" and self.quad:
            raise ConfigError("model.potential.quad", "only quadratic_cosine takes quad")
        if self.kind == "tabulated":
            if self.table is None or np.asarray(self.table).ndim != self.d:
                raise ConfigError("model.potential.table", f"need a {self.d}-d table")

    @property
    def periodic(self) -> bool:
        return self.kind != "quadratic_cosine"

    @property
    def series(self) -> TrigSeries:
        if self.kind == "tabulated":
            s = series_from_table(self.table)
        else:
            s = TrigSeries.from_terms(self.d, self.terms, quad=self.quad)
        return s.scaled(self.beta)

    def value(self, x) -> np.ndarray:
        return self.series(x)

    def grad(self, x) -> np.ndarray:
        return self.series.grad(x)


def potential_preset(name: str, beta: float = 1.0, d: int | None = None) -> PotentialSpec:
    """Named potentials used throughout the tests and the acceptance suite."""
    if name == "zero":
        return PotentialSpec("cosine", d or 1, (), beta=beta, name=name)
    if name == "bessel1d":  # V = cos(2 pi x)
        return PotentialSpec("cosine", 1, ((1.0, (1,), "cos"),), beta=beta, name=name)
    if name == "double_well1d":  # V = 2 cos(2 pi x)
        return PotentialSpec("cosine", 1, ((2.0, (1,), "cos"),), beta=beta, name=name)
    if name == "t2_coupled":
        # 2cos(2pi x1) + 0.5cos(2pi x1)cos(2pi x2), product expanded
        terms = ((2.0, (1, 0), "cos"), (0.25, (1, 1), "cos"), (0.25, (1, -1), "cos"))
        return PotentialSpec("cosine", 2, terms, beta=beta, name=name)
    if name == "separable2d":  # 2cos(2pi x1) + cos(2pi x2)
        terms = ((2.0, (1, 0), "cos"), (1.0, (0, 1), "cos"))
        return PotentialSpec("cosine", 2, terms, beta=beta, name=name)
    if name == "ou":  # x^2/2 on R
        return PotentialSpec("quadratic_cosine", d or 1, (), quad=1.0, beta=beta, name=name)
    if name == "ou_cosine":  # x^2/2 + 0.5 cos(2 pi x) on R
        return PotentialSpec("quadratic_cosine", 1, ((0.5, (1,), "cos"),), quad=1.0,
                             beta=beta, name=name)
    raise ConfigError("model.potential.preset", f"unknown potential preset {name!r}")


POTENTIAL_PRESETS = ("zero", "bessel1d", "double_well1d", "t2_coupled", "separable2d",
                     "ou", "ou_cosine")


@dataclass(frozen=True)
class ReactionCoordinate:
    """xi(x) = (x_1, ..., x_m) mod 1.  The SPDE coordinate lives in :mod:`spde`."""

    m: int = 1
    kind: str = "projection"

    def __post_init__(self):
        if self.kind not in ("projection", "spde"):
            raise ConfigError("model.xi.kind", f"unknown reaction coordinate {self.kind!r}")
        if self.m < 1:
            raise ConfigError("model.xi.m", "m must be a positive integer")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return wrap(x[..., : self.m])

    def jacobian(self, d: int) -> np.ndarray:
        """Constant (m, d) selection matrix."""
        J = np.zeros((self.m, d))
        J[np.arange(self.m), np.arange(self.m)] = 1.0
        return J


@dataclass(frozen=True)
class DynamicsSpec:
    family: str
    potential: PotentialSpec
    xi: ReactionCoordinate = ReactionCoordinate()
    gamma: float = 1.0
    epsilon: float = 0.1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError("model.dynamics", f"unknown dynamics family {self.family!r}")
        if not self.gamma > 0:
            raise ConfigError("model.gamma", "gamma must be positive")
        if not self.epsilon > 0:
            raise ConfigError("model.epsilon", "epsilon must be positive")
        if self.xi.m > self.potential.d:
            raise ConfigError("model.xi.m", "m must not exceed d")

    @property
    def d(self) -> int:
        return self.potential.d

    @property
    def m(self) -> int:
        return self.xi.m

    @property
    def noise_dim(self) -> int:
        return self.d + self.m if self.family == "extended" else self.d


@dataclass
class State:
    """Trajectory state.  ``p`` is used by Langevin, ``z`` by extended dynamics."""

    x: np.ndarray
    p: np.ndarray | None = None
    z: np.ndarray | None = None

    def copy(self) -> "State":
        return State(np.array(self.x, dtype=float),
                     None if self.p is None else np.array(self.p, dtype=float),
                     None if self.z is None else np.array(self.z, dtype=float))

    def as_vector(self) -> np.ndarray:
        parts = [self.x] + [v for v in (self.p, self.z) if v is not None]
        return np.concatenate([np.atleast_1d(v) for v in parts])


def initial_state(dyn: DynamicsSpec, x0=None, p0=None, z0=None) -> State:
    d, m = dyn.d, dyn.m
    x = np.zeros(d) if x0 is None else np.array(x0, dtype=float).reshape(d)
    if dyn.potential.periodic:
        x = wrap(x)
    p = z = None
    if dyn.family == "langevin":
        p = np.zeros(d) if p0 is None else np.array(p0, dtype=float).reshape(d)
    if dyn.family == "extended":
        z = dyn.xi(x) if z0 is None else wrap(np.array(z0, dtype=float).reshape(m))
    return State(x, p, z)


class BiasFunction(Protocol):
    def value(self, z) -> float: ...
    def gradient(self, z) -> np.ndarray: ...


class ZeroBias:
    def value(self, z) -> float:
        return 0.0

    def gradient(self, z) -> np.ndarray:
        return np.zeros(np.atleast_1d(z).shape[-1])


class FunctionBias:
    """Bias given by explicit callables ``A(z)`` and ``dA(z)``."""

    def __init__(self, A, dA):
        self._A, self._dA = A, dA

    def value(self, z) -> float:
        return float(self._A(np.asarray(z, dtype=float)))

    def gradient(self, z) -> np.ndarray:
        return np.atleast_1d(np.asarray(self._dA(np.asarray(z, dtype=float)), dtype=float))


def _check(state: State, dyn: DynamicsSpec):
    if np.asarray(state.x).shape != (dyn.d,):
        raise DimensionError(f"x must have shape ({dyn.d},)")
    if dyn.family == "langevin" and (state.p is None or np.shape(state.p) != (dyn.d,)):
        raise DimensionError("langevin state needs p of shape (d,)")
    if dyn.family == "extended" and (state.z is None or np.shape(state.z) != (dyn.m,)):
        raise DimensionError("extended state needs z of shape (m,)")


def xi_state(dyn: DynamicsSpec, state: State) -> np.ndarray:
    """Collective variable of the full state (z itself for extended dynamics)."""
    _check(state, dyn)
    if dyn.family == "extended":
        return wrap(state.z)
    return dyn.xi(state.x)


def biased_force(dyn: DynamicsSpec, bias: BiasFunction, x) -> np.ndarray:
    """-grad(V - A o xi)(x) for the physical coordinates."""
    x = np.asarray(x, dtype=float)
    f = -dyn.potential.grad(x)
    dA = np.asarray(bias.gradient(dyn.xi(x)), dtype=float)
    f[: dyn.m] += dA
    return f


def drift(dyn: DynamicsSpec, bias: BiasFunction, state: State) -> np.ndarray:
    """Drift of the biased dynamics, concatenated over the state components."""
    _check(state, dyn)
    if dyn.family == "brownian":
        out = biased_force(dyn, bias, state.x)
    elif dyn.family == "langevin":
        p = np.asarray(state.p, dtype=float)
        out = np.concatenate([p, biased_force(dyn, bias, state.x) - dyn.gamma * p])
    else:
        x = np.asarray(state.x, dtype=float)
        delta = periodic_displacement(dyn.xi(x), wrap(state.z))
        fx = -dyn.potential.grad(x)
        fx[: dyn.m] -= delta / dyn.epsilon
        fz = delta / dyn.epsilon + np.asarray(bias.gradient(wrap(state.z)), dtype=float)
        out = np.concatenate([fx, fz])
    if not np.all(np.isfinite(out)):
        raise InvalidStateError(f"non-finite drift at state {state}")
    return out


def unbiased_energy(dyn: DynamicsSpec, state: State) -> float:
    """E(V, 0): V, the Hamiltonian, or the extended potential U."""
    _check(state, dyn)
    v = float(dyn.potential.value(np.asarray(state.x, dtype=float)))
    if dyn.family == "langevin":
        v += 0.5 * float(np.dot(state.p, state.p))
    elif dyn.family == "extended":
        delta = periodic_displacement(dyn.xi(state.x), wrap(state.z))
        v += float(np.dot(delta, delta)) / (2.0 * dyn.epsilon)
    return v


def total_energy(dyn: DynamicsSpec, bias: BiasFunction, state: State) -> float:
    return unbiased_energy(dyn, state) - float(bias.value(xi_state(dyn, state)))


def extended_as_brownian(dyn: DynamicsSpec) -> "ExtendedPotential":
    """The extended potential U(x, z) viewed as a potential on E_d x T^m."""
    if dyn.family != "extended":
        raise ConfigError("model.dynamics", "not an extended dynamics")
    return ExtendedPotential(dyn)


class ExtendedPotential:
    def __init__(self, dyn: DynamicsSpec):
        self.dyn = dyn

    def value(self, y) -> float:
        d = self.dyn.d
        return unbiased_energy(self.dyn, State(np.asarray(y[:d]), None, np.asarray(y[d:])))

    def grad(self, y) -> np.ndarray:
        d = self.dyn.d
        st = State(np.asarray(y[:d], dtype=float), None, np.asarray(y[d:], dtype=float))
        return -drift(self.dyn, ZeroBias(), st)


# ---------------------------------------------------------------- observables

@dataclass(frozen=True)
class Observable:
    """Named test function.  ``kind`` is 'series' (of x/q) or 'p2' (|p|^2 / d)."""

    name: str
    kind: str = "series"
    series: TrigSeries | None = None

    def __call__(self, state: State) -> float:
        if self.kind == "p2":
            p = np.asarray(state.p, dtype=float)
            return float(np.dot(p, p) / p.size)
        return float(self.series(np.asarray(state.x, dtype=float)))

    def on_positions(self, x) -> np.ndarray:
        if self.kind != "series":
            raise ConfigError("observables", f"{self.name} is not a function of positions")
        return self.series(x)


def _von_mises_series(d: int, coord: int, center: float, kappa: float, nmax: int = 48):
    # exp(kappa (cos(2 pi (x - c)) - 1)) via its Fourier coefficients on a fine grid
    n = 4 * nmax
    t = np.arange(n) / n
    vals = np.exp(kappa * (np.cos(TWO_PI * (t - center)) - 1.0))
    c = np.fft.rfft(vals) / n
    terms = []
    for k in range(1, nmax + 1):
        freq = [0] * d
        freq[coord] = k
        terms.append((2.0 * c[k].real, tuple(freq), "cos"))
        terms.append((-2.0 * c[k].imag, tuple(freq), "sin"))
    return TrigSeries.from_terms(d, terms, const=c[0].real)


def observable(name: str, d: int) -> Observable:
    """Parse an observable name.

    ``one``, ``cos<j>``, ``sin<j>`` (coordinate j, 1-based), ``cos1cos2``,
    ``p2`` (Langevin kinetic), ``bump<j>:<center>:<kappa>`` (smooth periodic bump).
    """
    def fr(j, k=1):
        f = [0] * d
        f[j] = k
        return tuple(f)

    if name == "one":
        return Observable(name, series=TrigSeries.from_terms(d, [], const=1.0))
    if name == "p2":
        return Observable(name, kind="p2")
    if name == "cos1cos2" and d >= 2:
        terms = [(0.5, (1, 1) + (0,) * (d - 2), "cos"), (0.5, (1, -1) + (0,) * (d - 2), "cos")]
        return Observable(name, series=TrigSeries.from_terms(d, terms))
    for kind in ("cos", "sin"):
        if name.startswith(kind) and name[3:].isdigit():
            j = int(name[3:]) - 1
            if not 0 <= j < d:
                break
            return Observable(name, series=TrigSeries.from_terms(d, [(1.0, fr(j), kind)]))
    if name.startswith("bump"):
        try:
            head, c, k = name.split(":")
            j = int(head[4:]) - 1
            center, kappa = float(c), float(k)
        except ValueError:
            raise ConfigError("observables", f"malformed bump observable {name!r}") from None
        if 0 <= j < d and kappa > 0:
            return Observable(name, series=_von_mises_series(d, j, center, kappa))
    raise ConfigError("observables", f"unknown observable {name!r} for d={d}")


def make_observables(names: Sequence[str], d: int) -> list[Observable]:
    return [observable(n, d) for n in names]


def check_finite_state(state: State, step: int | None = None):
    if not np.all(np.isfinite(state.as_vector())):
        raise InvalidStateError(f"non-finite state at step {step}")
