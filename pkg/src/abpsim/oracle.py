"""Deterministic quadrature references on T^1 and T^2.

Every integral over the torus uses the periodic rectangle rule, which is
spectrally accurate for the smooth integrands involved.  Grid functions
(biases, free energies) are extended to finer grids by trigonometric
interpolation, so results converge as the resolution grows.

The asymptotic-variance oracle solves the one-dimensional Poisson problem of
the biased overdamped generator,

    (e^{-V_A} Psi')' = e^{-V_A} e^{-A} (phi - mu(phi)),   V_A = V - A,

with FFT antiderivatives.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ABPError, ConfigError, UnsupportedError
from .kernel import KernelSpec, kernel_row
from .model import Observable, PotentialSpec, observable

TWO_PI = 2.0 * np.pi


class OracleConsistencyError(ABPError, ArithmeticError):
    """An internal identity of the oracle failed (e.g. an uncentered right-hand side)."""


def _check_torus(pot: PotentialSpec):
    if not pot.periodic:
        raise UnsupportedError("quadrature oracles need a periodic potential")
    if pot.d > 2:
        raise UnsupportedError("quadrature oracles support d <= 2")


def _phi_callable(phi, d):
    if isinstance(phi, str):
        phi = observable(phi, d)
    if isinstance(phi, Observable):
        if phi.kind == "p2":
            return None
        return phi.on_positions
    return phi


def torus_nodes(n: int, d: int) -> np.ndarray:
    """All nodes of the uniform n^d grid, shape (n, ..., n, d), 'ij' ordering."""
    axes = np.meshgrid(*[np.arange(n) / n] * d, indexing="ij")
    return np.stack(axes, axis=-1)


def refine(values, n: int) -> np.ndarray:
    """Trigonometric interpolation of a periodic grid function onto n points per axis."""
    values = np.asarray(values, dtype=float)
    G = values.shape[0]
    if n == G:
        return values.copy()
    if n < G:
        raise ConfigError("resolution", "refinement target must not be coarser")
    out = values
    for axis in range(values.ndim):
        c = np.fft.fft(out, axis=axis)
        shape = list(c.shape)
        shape[axis] = n
        big = np.zeros(shape, dtype=complex)
        half = G // 2
        src = [slice(None)] * out.ndim
        dst = [slice(None)] * out.ndim
        src[axis], dst[axis] = slice(0, half), slice(0, half)
        big[tuple(dst)] = c[tuple(src)]
        src[axis], dst[axis] = slice(G - half + (G % 2 == 0), G), slice(n - half + (G % 2 == 0), n)
        big[tuple(dst)] = c[tuple(src)]
        if G % 2 == 0:
            # split the Nyquist mode symmetrically
            src[axis] = slice(half, half + 1)
            nyq = c[tuple(src)] / 2
            dst[axis] = slice(half, half + 1)
            big[tuple(dst)] += nyq
            dst[axis] = slice(n - half, n - half + 1)
            big[tuple(dst)] += nyq
        out = np.fft.ifft(big, axis=axis).real * (n / G)
    return out


def _lift(A, m: int, n: int, d: int) -> np.ndarray:
    """Values of A(xi(x)) on the n^d grid, for A given on an m-dim grid."""
    if A is None:
        return np.zeros((n,) * d)
    A = np.asarray(A, dtype=float)
    if np.ndim(A) == 0:
        return np.full((n,) * d, float(A))
    if A.ndim != m:
        raise ConfigError("bias", "bias grid dimension does not match m")
    An = refine(A, n)
    return An.reshape(An.shape + (1,) * (d - m)) * np.ones((n,) * d)


def quadrature_mu_star(pot: PotentialSpec, phi, resolution: int = 256) -> float:
    """Expectation of phi under exp(-V) on the torus."""
    return mu_star_A(pot, None, phi, resolution=resolution)


def free_energy_star(pot: PotentialSpec, m: int = 1, G: int = 256,
                     inner: int | None = None) -> np.ndarray:
    """A* on the G^m grid, normalized so that the mean of exp(-A*) is one."""
    _check_torus(pot)
    if not 1 <= m <= pot.d:
        raise ConfigError("model.xi.m", "need 1 <= m <= d")
    inner = inner or G
    if m == pot.d:
        marg = np.exp(-pot.value(torus_nodes(G, pot.d)))
    else:
        # d = 2, m = 1: integrate out the second coordinate
        z = np.arange(G) / G
        y = np.arange(inner) / inner
        pts = np.stack(np.meshgrid(z, y, indexing="ij"), axis=-1)
        marg = np.exp(-pot.value(pts)).mean(axis=1)
    return -np.log(marg / marg.mean())


def _kernel_matrix(kernel: KernelSpec, G: int, R: int) -> np.ndarray:
    """K[g, r] = discrete kernel row centered at zeta_r = r/R, evaluated at z_g."""
    return np.stack([kernel_row(kernel, G, [r / R]) for r in range(R)], axis=1)


def smooth_with_kernel(density, kernel: KernelSpec, G: int, R: int | None = None):
    """(z_g) -> mean over zeta of K(z_g, zeta) density(zeta), density on an R-grid."""
    density = np.asarray(density, dtype=float)
    m = density.ndim
    R = density.shape[0] if R is None else R
    if density.shape[0] != R:
        density = refine(density, R)
    if kernel.family == "constant":
        return np.full((G,) * m, density.mean())
    if m == 1:
        return _kernel_matrix(kernel, G, R) @ density / R
    if kernel.family != "gaussian":
        raise UnsupportedError("two-dimensional smoothing supports the gaussian kernel only")
    bump = KernelSpec("gaussian", kernel.epsilon, 1.0, kernel.wraps)
    W = _kernel_matrix(bump, G, R)
    a = kernel.alpha
    return a * (W @ density @ W.T) / (R * R) + (1.0 - a) * density.mean()


def a_infinity(pot: PotentialSpec, kernel: KernelSpec, m: int = 1, G: int = 256,
               R: int | None = None, inner: int | None = None) -> np.ndarray:
    """Limit bias: exp(-A_inf) = mean over zeta of K(., zeta) exp(-A*(zeta))."""
    R = R or G
    dens = np.exp(-free_energy_star(pot, m, R, inner))
    sm = smooth_with_kernel(dens, kernel, G, R)
    return -np.log(sm / sm.mean())


def gaussian_smooth_fft(values, variance: float) -> np.ndarray:
    """Periodic convolution with the wrapped Gaussian of the given variance."""
    values = np.asarray(values, dtype=float)
    out = values
    for axis in range(values.ndim):
        n = values.shape[axis]
        k = np.fft.fftfreq(n, 1.0 / n)
        shape = [1] * values.ndim
        shape[axis] = n
        mult = np.exp(-2.0 * np.pi ** 2 * k ** 2 * variance).reshape(shape)
        out = np.fft.ifft(np.fft.fft(out, axis=axis) * mult, axis=axis).real
    return out


def a_infinity_extended(pot: PotentialSpec, kernel: KernelSpec, eps_ext: float, m: int = 1,
                        G: int = 256, R: int | None = None) -> np.ndarray:
    """Limit bias for the extended dynamics.

    The equilibrium law of the auxiliary variable is exp(-A*) smoothed by the
    wrapped Gaussian of variance eps_ext; the kernel is applied on top.
    """
    R = R or G
    dens = np.exp(-free_energy_star(pot, m, R))
    dens = gaussian_smooth_fft(dens, eps_ext)
    sm = smooth_with_kernel(dens, kernel, G, R)
    return -np.log(sm / sm.mean())


def mu_star_A(pot: PotentialSpec, A, phi, m: int = 1, resolution: int = 256,
              family: str = "brownian", eps_ext: float | None = None) -> float:
    """Expectation of phi under the biased equilibrium exp(-(E(V) - A o xi)) / Z^A.

    ``A`` is None, a constant, or a grid function on T^m.  For the Langevin
    family the kinetic observable 'p2' has expectation one; the position
    marginal coincides with the overdamped one.  For the extended family the
    bias acts on the auxiliary variable and is transferred to positions by
    the Gaussian coupling.
    """
    _check_torus(pot)
    d, n = pot.d, resolution
    f = _phi_callable(phi, d)
    if f is None:
        if family != "langevin":
            raise ConfigError("observables", "p2 needs langevin dynamics")
        return 1.0
    x = torus_nodes(n, d)
    if family == "extended":
        if eps_ext is None:
            raise ConfigError("model.epsilon", "extended oracle needs eps_ext")
        eA = np.ones((n,) * m) if A is None else np.exp(refine(np.asarray(A, float), n)
                                                        if np.ndim(A) else np.full((n,) * m, float(A)))
        lift = np.log(gaussian_smooth_fft(eA, eps_ext))
        lift = lift.reshape(lift.shape + (1,) * (d - m)) * np.ones((n,) * d)
    else:
        lift = _lift(A, m, n, d)
    logw = -pot.value(x) + lift
    w = np.exp(logw - logw.max())
    return float(np.sum(w * f(x)) / np.sum(w))


def image_density(pot: PotentialSpec, A, m: int = 1, G: int = 256) -> np.ndarray:
    """Density (w.r.t. Lebesgue on T^m) of xi under the biased equilibrium."""
    Astar = free_energy_star(pot, m, G)
    logd = -Astar + (0.0 if A is None else np.asarray(A, dtype=float))
    dens = np.exp(logd - logd.max())
    return dens / dens.mean()


# ------------------------------------------------------------------ Poisson

@dataclass
class PoissonSolution:
    x: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    rhs: np.ndarray
    VA: np.ndarray
    A: np.ndarray
    mu_phi: float

    def defect(self) -> float:
        """Sup-norm residual of psi'' - V_A' psi' - rhs, with an independent
        spectral differentiation of psi itself."""
        n = self.x.size
        k = np.fft.fftfreq(n, 1.0 / n)
        ph = np.fft.fft(self.psi)
        d1 = np.fft.ifft(ph * (2j * np.pi * k)).real
        d2 = np.fft.ifft(ph * (2j * np.pi * k) ** 2).real
        dVA = np.fft.ifft(np.fft.fft(self.VA) * (2j * np.pi * k)).real
        return float(np.max(np.abs(d2 - dVA * d1 - self.rhs)))


def _antiderivative(g):
    """Periodic mean-zero antiderivative of a mean-zero periodic grid function."""
    n = g.size
    k = np.fft.fftfreq(n, 1.0 / n)
    c = np.fft.fft(g)
    out = np.zeros_like(c)
    nz = k != 0
    out[nz] = c[nz] / (2j * np.pi * k[nz])
    return np.fft.ifft(out).real


def poisson_1d(pot: PotentialSpec, A, phi, resolution: int = 1024,
               tol: float = 1e-10) -> PoissonSolution:
    """Solve L^A Psi = e^{-A}(phi - mu*(phi)) on T^1, normalized by mu*^A(Psi) = 0."""
    _check_torus(pot)
    if pot.d != 1:
        raise UnsupportedError("the Poisson oracle is one-dimensional")
    n = resolution
    x = np.arange(n) / n
    f = _phi_callable(phi, 1)
    Av = np.zeros(n) if A is None else (np.full(n, float(A)) if np.ndim(A) == 0
                                        else refine(np.asarray(A, dtype=float), n))
    V = pot.value(x[:, None])
    VA = V - Av
    phiv = f(x[:, None])
    wV = np.exp(-(V - V.min()))
    mu_phi = float(np.sum(wV * phiv) / np.sum(wV))
    rhs = np.exp(-Av) * (phiv - mu_phi)
    rho = np.exp(-(VA - VA.min()))
    g = rho * rhs
    scale = max(np.mean(np.abs(g)), 1e-300)
    if not abs(g.mean()) <= tol * max(1.0, scale):  # also catches NaN
        raise OracleConsistencyError(
            f"right-hand side not centered under the biased measure: {g.mean():.3e}")
    Gt = _antiderivative(g - g.mean())
    inv = 1.0 / rho
    c = -np.mean(inv * Gt) / np.mean(inv)
    dpsi = inv * (Gt + c)
    psi = _antiderivative(dpsi - dpsi.mean())
    psi = psi - np.sum(rho * psi) / np.sum(rho)
    return PoissonSolution(x, psi, dpsi, rhs, VA, Av, mu_phi)


def asymptotic_variance(pot: PotentialSpec, A, phi, resolution: int = 1024,
                        formula: str = "weighted") -> float:
    """CLT variance of the reweighted estimator for the bias A.

    ``weighted`` (default) is 2 mu^A(|Psi'|^2) / mu^A(e^{-A})^2, the variance
    of the ratio estimator (invariant under constant shifts of A).
    ``unweighted`` is 2 mu*(|Psi'|^2); the two agree when A = 0.
    """
    sol = poisson_1d(pot, A, phi, resolution)
    V = sol.VA + sol.A
    wV = np.exp(-(V - V.min()))
    if formula == "unweighted":
        return float(2.0 * np.sum(wV * sol.dpsi ** 2) / np.sum(wV))
    if formula != "weighted":
        raise ConfigError("formula", f"unknown variance formula {formula!r}")
    wA = np.exp(-(sol.VA - sol.VA.min()))
    muA_grad = np.sum(wA * sol.dpsi ** 2) / np.sum(wA)
    muA_eA = np.sum(wA * np.exp(-sol.A)) / np.sum(wA)
    return float(2.0 * muA_grad / muA_eA ** 2)


# ------------------------------------------------------------------ tables

@dataclass
class OracleTables:
    names: list
    mu_star_phi: dict
    A_star: np.ndarray
    A_inf: np.ndarray
    mu_star_A_inf_phi: dict
    Z_A_inf: float
    V_inf: dict | None = None
    psi: np.ndarray | None = None


def build_tables(pot: PotentialSpec, kernel: KernelSpec, observables, m: int = 1,
                 G: int = 256, resolution: int = 256, family: str = "brownian",
                 eps_ext: float | None = None) -> OracleTables:
    names = list(observables)
    Astar = free_energy_star(pot, m, G)
    if family == "extended":
        Ainf = a_infinity_extended(pot, kernel, eps_ext, m, G)
    else:
        Ainf = a_infinity(pot, kernel, m, G)
    mus = {n: (1.0 if n == "p2" else quadrature_mu_star(pot, n, resolution)) for n in names}
    muA = {n: mu_star_A(pot, Ainf, n, m, resolution, family, eps_ext) for n in names}
    x = torus_nodes(resolution, pot.d)
    lift = _lift(Ainf, m, resolution, pot.d)
    ZA = float(np.mean(np.exp(-pot.value(x) + lift)))
    Vinf, psi = None, None
    if pot.d == 1 and m == 1 and family == "brownian":
        Vinf = {n: asymptotic_variance(pot, Ainf, n) for n in names if n != "p2"}
        psi = poisson_1d(pot, Ainf, names[0]).psi if names[0] != "p2" else None
    return OracleTables(names, mus, Astar, Ainf, muA, ZA, Vinf, psi)
