"""Spectral Galerkin simulation of the biased stochastic heat equation on (0, 1).

The field is expanded on e_n(x) = sqrt(2) sin(n pi x), n = 1..N, with
Dirichlet eigenvalues lambda_n = n^2 pi^2.  The collective variable is

    xi(u) = 1/2 + arctan(mean(u) / 2) / pi  in (0, 1),

and the scheme is linear-implicit Euler: the stiff Laplacian sits in the
denominator, the nonlinearity and the bias force are explicit.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from . import _backend
from .bias import BiasGrid, Mu0
from .engine import EstimatorAccumulators, RunReport, SimConfig, cached_kernel_bounds
from .errors import BoundViolation, ConfigError, NumericalBlowup
from .integrators import RngStream
from .kernel import KernelSpec
from .normalization import NormalizationSpec
from .oracle import smooth_with_kernel

log = logging.getLogger(__name__)

NONLINEARITIES = {"none": 0, "cosine": 1, "allen_cahn": 2}
OBSERVABLES = ["ubar", "ubar2", "cos_xi", "sin_xi", "u1", "u2", "u3", "u4",
               "u1sq", "u2sq", "u3sq", "u4sq", "norm2"]


@dataclass(frozen=True)
class SpdeModel:
    nonlinearity: str = "cosine"
    c: float = 1.0
    modes: int = 32
    grid: int = 128
    allow_allen_cahn: bool = False

    def __post_init__(self):
        if self.nonlinearity not in NONLINEARITIES:
            raise ConfigError("spde.nonlinearity",
                              f"unknown nonlinearity {self.nonlinearity!r}")
        if self.modes < 1:
            raise ConfigError("spde.modes", "need at least one mode")
        if self.grid < 4 * self.modes:
            raise ConfigError("spde.grid", "grid must have at least 4 points per mode")
        if self.nonlinearity == "cosine" and not abs(self.c) < np.pi ** 2:
            raise ConfigError("spde.c", "the cosine nonlinearity needs |c| < pi^2 "
                              "(second derivative bounded below the first eigenvalue)")
        if self.nonlinearity == "allen_cahn":
            if not self.allow_allen_cahn:
                raise ConfigError("spde.allow_allen_cahn",
                                  "allen_cahn violates the one-sided curvature condition; "
                                  "set allow_allen_cahn to run it anyway")
            log.warning("allen_cahn nonlinearity: the curvature condition fails, "
                        "results are outside the covered setting")

    @property
    def eigenvalues(self) -> np.ndarray:
        n = np.arange(1, self.modes + 1)
        return (n * np.pi) ** 2


def sine_matrix(N: int, P: int) -> np.ndarray:
    """S[n-1, j-1] = e_n(j / P) for interior points j = 1..P-1."""
    n = np.arange(1, N + 1)[:, None]
    j = np.arange(1, P)[None, :]
    return np.sqrt(2.0) * np.sin(np.pi * n * j / P)


def ones_projection(N: int) -> np.ndarray:
    """<e_n, 1> = sqrt(2) (1 - (-1)^n) / (n pi)."""
    n = np.arange(1, N + 1)
    return np.sqrt(2.0) * (1.0 - (-1.0) ** n) / (n * np.pi)


def to_grid(u, P: int) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return u @ sine_matrix(u.size, P)


def from_grid(values, N: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    P = values.size + 1
    return sine_matrix(N, P) @ values / P


def mean_value(u) -> float:
    u = np.asarray(u, dtype=float)
    return float(u @ ones_projection(u.size))


def xi_spde(u) -> float:
    ubar = mean_value(u)
    return float(0.5 + np.arctan(0.5 * ubar) / np.pi)


def nonlinear_force(model: SpdeModel, u) -> np.ndarray:
    """Galerkin projection of -V'(u(x)), evaluated pseudo-spectrally."""
    u = np.asarray(u, dtype=float)
    if model.nonlinearity == "none":
        return np.zeros_like(u)
    U = to_grid(u, model.grid)
    f = model.c * np.sin(U) if model.nonlinearity == "cosine" else U - U ** 3
    return from_grid(f, u.size)


def spde_step(model: SpdeModel, u, bias, dt: float, rng: RngStream) -> np.ndarray:
    """One linear-implicit step; ``bias`` provides gradient(z) (or is None)."""
    u = np.asarray(u, dtype=float)
    c1 = ones_projection(u.size)
    ubar = float(u @ c1)
    f = nonlinear_force(model, u)
    if bias is not None:
        xi = 0.5 + np.arctan(0.5 * ubar) / np.pi
        dA = float(np.atleast_1d(bias.gradient([xi]))[0])
        f = f + dA / (2.0 * np.pi) / (1.0 + 0.25 * ubar * ubar) * c1
    new = (u + dt * f + np.sqrt(2.0 * dt) * rng.normals(u.size)) / (1.0 + dt * model.eigenvalues)
    if not np.all(np.isfinite(new)):
        raise NumericalBlowup("non-finite SPDE modes", state=new)
    return new


def mean_variance(N: int | None = None, dt: float | None = None) -> float:
    """Stationary variance of the spatial mean for the free field.

    With N = None the full series 1/12; otherwise truncated at N modes, and
    with dt the stationary variance of the discrete scheme is used per mode.
    """
    if N is None:
        return 1.0 / 12.0
    lam = (np.arange(1, N + 1) * np.pi) ** 2
    var = 1.0 / lam if dt is None else 1.0 / (lam * (1.0 + 0.5 * dt * lam))
    return float(np.sum(ones_projection(N) ** 2 * var))


def gaussian_free_energy(G: int, variance: float = 1.0 / 12.0) -> np.ndarray:
    """A* on the G-grid when mean(u) ~ N(0, variance), normalized mean(exp(-A*)) = 1."""
    xi = np.arange(G) / G
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        ubar = 2.0 * np.tan(np.pi * (xi - 0.5))
        jac = 2.0 * np.pi / np.cos(np.pi * (xi - 0.5)) ** 2
        dens = np.exp(-ubar ** 2 / (2.0 * variance)) / np.sqrt(2 * np.pi * variance) * jac
    dens = np.where(np.isfinite(dens), dens, 0.0)
    dens = np.maximum(dens, 1e-300)
    return -np.log(dens / dens.mean())


def gaussian_a_infinity(kernel: KernelSpec, G: int = 256, variance: float = 1.0 / 12.0,
                        R: int = 4096) -> np.ndarray:
    """Limit bias for the free field: the Gaussian image density smoothed by K.

    The image density of xi is sharply peaked but smooth, so it is integrated
    on a finer R-grid before smoothing.
    """
    dens = np.exp(-gaussian_free_energy(R, variance))
    if kernel.family == "constant":
        sm = np.full(G, dens.mean())
    else:
        sm = smooth_with_kernel(dens, kernel, G, R)
    return -np.log(sm / sm.mean())


class SpdeTrajectory:
    def __init__(self, model: SpdeModel, kernel: KernelSpec, G: int, dt: float, seed: int = 0,
                 stream_id: int = 0, adaptive: bool = True, A_fixed=None, u0=None,
                 backend: str | None = None, check_bounds: bool = True, hist_bins: int = 50):
        self.model, self.dt = model, float(dt)
        self.core = _backend.get(backend)
        self.rng = RngStream(seed, stream_id)
        self.seed, self.stream_id = seed, stream_id
        N = model.modes
        self.u = np.zeros(N) if u0 is None else np.array(u0, dtype=float).reshape(N)
        self.S = np.ascontiguousarray(sine_matrix(N, model.grid))
        self.lam = np.ascontiguousarray(model.eigenvalues)
        self.c1 = np.ascontiguousarray(ones_projection(N))
        self.check_bounds = check_bounds
        self.hist_bins = hist_bins
        norm = NormalizationSpec("l1")
        if adaptive and A_fixed is None:
            self.bias = BiasGrid.init(kernel, norm, Mu0.atom([xi_spde(self.u)]), G, 1,
                                      kernel_bounds=cached_kernel_bounds(kernel, G, 1))
            self.adaptive = True
        else:
            A = np.zeros(G) if A_fixed is None else np.asarray(A_fixed, dtype=float)
            self.bias = BiasGrid.from_bias(A, norm)
            self.adaptive = False
        self.G = G
        self.kernel = self.bias.kernel
        self._h = np.ascontiguousarray(self.bias.h.ravel())
        prior = self._observe()
        nobs = len(OBSERVABLES)
        self.acc = EstimatorAccumulators(list(OBSERVABLES), prior, 0.0, np.zeros(nobs),
                                         np.zeros(nobs), 0, self.dt, np.zeros(hist_bins))
        self._accv = np.zeros(2)
        self._stats = np.array([np.inf, -np.inf])
        self._info = np.zeros(2, dtype=np.int64)

    def _observe(self) -> np.ndarray:
        u = self.u
        ubar = float(u @ self.c1)
        xi = 0.5 + np.arctan(0.5 * ubar) / np.pi
        head = np.zeros(4)
        head[: min(4, u.size)] = u[:4]
        return np.concatenate([[ubar, ubar ** 2, np.cos(2 * np.pi * xi), np.sin(2 * np.pi * xi)],
                               head, head ** 2, [u @ u]])

    @property
    def time(self) -> float:
        return self.acc.elapsed

    def advance(self, nsteps: int):
        if nsteps <= 0:
            return
        normals = np.ascontiguousarray(self.rng.normals(nsteps, self.model.modes))
        keps, kalpha, kcent = (np.ascontiguousarray(v) for v in self.kernel.parts())
        self._accv[0] = self.acc.S_w
        status = self.core.advance_spde(
            self.dt, float(self.model.c), NONLINEARITIES[self.model.nonlinearity], self.u,
            self.S, self.lam, self.c1, self._h, self.G, self.adaptive, keps, kalpha, kcent,
            float(self.kernel.power), int(self.kernel.wraps), float(self.bias.bound_m),
            float(self.bias.bound_M0), bool(self.check_bounds and self.adaptive), self._accv,
            self.acc.S_wphi, self.acc.S_phi, self.acc.histogram, self.hist_bins, self._stats,
            normals, int(nsteps), int(self.acc.steps), self._info)
        self.acc.S_w = float(self._accv[0])
        self.acc.steps += int(self._info[1])
        self.bias.h = self._h
        if self.adaptive:
            self.bias.theta = self.acc.S_w
        if status == 1:
            raise NumericalBlowup(f"non-finite SPDE state at step {int(self._info[0])}",
                                  step=int(self._info[0]), t=self.time, state=self.u.copy())
        if status == 2:
            raise BoundViolation(f"a-priori bound violated at step {int(self._info[0])}",
                                 step=int(self._info[0]))

    @property
    def F_range(self) -> tuple:
        return float(self._stats[0]), float(self._stats[1])


def run_spde_abp(model: SpdeModel, kernel: KernelSpec, sim: SimConfig, G: int = 256,
                 stream_id: int = 0, adaptive: bool = True, A_fixed=None, A_ref=None,
                 backend: str | None = None) -> RunReport:
    t0 = time.perf_counter()
    traj = SpdeTrajectory(model, kernel, G, sim.dt, sim.seed, stream_id, adaptive=adaptive,
                          A_fixed=A_fixed, backend=backend)
    records = []
    done = 0
    for target in sim.checkpoint_steps():
        while done < target:
            n = min(sim.chunk, target - done)
            traj.advance(n)
            done += n
        mu, rho = traj.acc.mu_bar(), traj.acc.rho_bar()
        rec = {"t": traj.time}
        rec.update({f"mu_bar[{k}]": float(v) for k, v in zip(OBSERVABLES, mu)})
        rec.update({f"rho_bar[{k}]": float(v) for k, v in zip(OBSERVABLES, rho)})
        if A_ref is not None:
            rec["sup_A_err"] = float(np.max(np.abs(traj.bias.A - A_ref)))
        records.append(rec)
    mu, rho = traj.acc.mu_bar(), traj.acc.rho_bar()
    return RunReport(list(OBSERVABLES), dict(zip(OBSERVABLES, map(float, mu))),
                     dict(zip(OBSERVABLES, map(float, rho))), traj.bias.copy(),
                     traj.acc.histogram.copy(), records, traj.acc, sim.seed, stream_id,
                     time.perf_counter() - t0, _backend.name_of(traj.core), traj.F_range)


def mode_variances(report: RunReport, n_modes: int = 4) -> np.ndarray:
    """Var(u_n) from occupation averages of u_n and u_n^2."""
    rho = report.rho_bar
    return np.array([rho[f"u{n}sq"] - rho[f"u{n}"] ** 2 for n in range(1, n_modes + 1)])


def mean_field_variance(report: RunReport) -> float:
    return report.rho_bar["ubar2"] - report.rho_bar["ubar"] ** 2
