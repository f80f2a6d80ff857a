"""The coupled adaptive loop, its non-adaptive baseline, and replica ensembles.

One step, for every dynamics family:

1. z = collective variable of the current state, w = F(z) from the grid;
2. accumulate S_w += w dt, S_wphi += w phi dt, S_phi += phi dt, histogram;
3. move the state with the bias as it was before this step's deposit;
4. deposit the kernel row at z with weight w dt (adaptive runs only).

The weighted estimate is ``(mu0(phi) + S_wphi) / (1 + S_w)`` and the
occupation estimate ``(mu0(phi) + S_phi) / (1 + t)``.
"""
from __future__ import annotations

import functools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .bias import BiasGrid, Mu0
from .errors import BoundViolation, ConfigError, NumericalBlowup
from .integrators import RngStream, StepperConfig, default_scheme
from .kernel import KernelSpec, kernel_min_max
from .model import DynamicsSpec, State, initial_state, make_observables, xi_state
from .normalization import NormalizationSpec

FAMILY_CODES = {"brownian": 0, "langevin": 1, "extended": 2}


@functools.lru_cache(maxsize=64)
def cached_kernel_bounds(kernel: KernelSpec, G: int, m: int):
    return kernel_min_max(kernel, G, m)


@dataclass(frozen=True)
class ABPSetup:
    """Everything that defines one trajectory except time stepping and seeds."""

    dyn: DynamicsSpec
    kernel: KernelSpec = KernelSpec()
    norm: NormalizationSpec = NormalizationSpec()
    grid_size: int = 256
    observables: tuple = ("cos1",)
    x0: tuple | None = None
    p0: tuple | None = None
    z0: tuple | None = None
    mu0: str = "atom"
    mean_force: bool = False
    check_bounds: bool = True
    hist_bins: int = 50

    def __post_init__(self):
        if self.mu0 not in ("atom", "uniform"):
            raise ConfigError("mu0", "mu0 must be 'atom' or 'uniform'")
        if self.mu0 == "uniform" and not self.dyn.potential.periodic:
            raise ConfigError("mu0", "a uniform initial measure needs a periodic state space")
        if self.kernel.family == "mixture" and len(self.kernel.components) > 64:
            raise ConfigError("kernel.components", "at most 64 mixture components")
        if self.hist_bins < 1:
            raise ConfigError("hist_bins", "need at least one histogram bin")
        obs = make_observables(self.observables, self.dyn.d)
        if any(o.kind == "p2" for o in obs) and self.dyn.family != "langevin":
            raise ConfigError("observables", "p2 needs langevin dynamics")

    @property
    def m(self) -> int:
        return self.dyn.m


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_final: float = 1.0
    seed: int = 0
    replicas: int = 1
    checkpoints: tuple = ()
    scheme: str | None = None
    max_steps: float = 1e8
    chunk: int = 32768

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("sim.dt", "dt must be positive")
        if not self.t_final > 0:
            raise ConfigError("sim.t_final", "t_final must be positive")
        if self.n_steps > self.max_steps:
            raise ConfigError("sim.t_final",
                              f"{self.n_steps} steps exceed the cap of {self.max_steps:g}")
        if self.replicas < 1:
            raise ConfigError("sim.replicas", "need at least one replica")
        for c in self.checkpoints:
            if not 0 < c <= self.t_final:
                raise ConfigError("sim.checkpoints", "checkpoints must lie in (0, t_final]")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def checkpoint_steps(self) -> list[int]:
        steps = sorted({int(round(c / self.dt)) for c in self.checkpoints} | {self.n_steps})
        return [s for s in steps if s > 0]


@dataclass
class EstimatorAccumulators:
    names: list
    mu0_phi: np.ndarray
    S_w: float = 0.0
    S_wphi: np.ndarray | None = None
    S_phi: np.ndarray | None = None
    steps: int = 0
    dt: float = 1e-3
    histogram: np.ndarray | None = None

    @property
    def elapsed(self) -> float:
        return self.steps * self.dt

    def mu_bar(self) -> np.ndarray:
        return (self.mu0_phi + self.S_wphi) / (1.0 + self.S_w)

    def rho_bar(self) -> np.ndarray:
        return (self.mu0_phi + self.S_phi) / (1.0 + self.elapsed)


@dataclass
class RunReport:
    names: list
    mu_bar: dict
    rho_bar: dict
    bias_final: BiasGrid
    histogram: np.ndarray
    checkpoints: list
    accumulators: EstimatorAccumulators
    seed: int
    stream_id: int
    wall_time: float
    backend: str
    F_range: tuple
    final_state: State | None = None
    config: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "observables": self.names,
            "mu_bar": self.mu_bar,
            "rho_bar": self.rho_bar,
            "S_w": self.accumulators.S_w,
            "elapsed": self.accumulators.elapsed,
            "steps": self.accumulators.steps,
            "seed": self.seed,
            "stream_id": self.stream_id,
            "wall_time": self.wall_time,
            "backend": self.backend,
            "F_min_observed": self.F_range[0],
            "F_max_observed": self.F_range[1],
            "bound_m": self.bias_final.bound_m,
            "bound_M0": self.bias_final.bound_M0,
        }


def _stack_observables(obs, d):
    freqs, a, b, const, start, kind = [], [], [], [], [0], []
    for o in obs:
        if o.kind == "p2":
            const.append(0.0)
            kind.append(1)
        else:
            s = o.series
            freqs.append(s.freqs)
            a.append(s.a)
            b.append(s.b)
            const.append(s.const)
            kind.append(0)
        start.append(start[-1] + (0 if o.kind == "p2" else len(o.series.a)))
    F = np.ascontiguousarray(np.vstack(freqs) if freqs else np.zeros((0, d)))
    if F.shape[0] == 0:
        F = np.zeros((1, d))
    A = np.concatenate(a) if a else np.zeros(0)
    Bv = np.concatenate(b) if b else np.zeros(0)
    if A.size == 0:
        A, Bv = np.zeros(1), np.zeros(1)
    return (F, np.ascontiguousarray(A), np.ascontiguousarray(Bv),
            np.array(const, dtype=float), np.array(start, dtype=np.int64),
            np.array(kind, dtype=np.int64))


class Trajectory:
    """One trajectory with its own bias grid and accumulators (single writer)."""

    def __init__(self, setup: ABPSetup, dt: float, seed: int = 0, stream_id: int = 0,
                 A_fixed=None, backend: str | None = None, scheme: str | None = None,
                 zero_noise: bool = False):
        dyn = setup.dyn
        self.setup, self.dyn, self.dt = setup, dyn, float(dt)
        StepperConfig(dt, scheme or default_scheme(dyn.family)).check_family(dyn.family)
        self.core = _backend.get(backend)
        self.rng = RngStream(seed, stream_id, zero_noise=zero_noise)
        self.seed, self.stream_id = seed, stream_id
        self.state = initial_state(dyn, setup.x0, setup.p0, setup.z0)
        self.obs = make_observables(setup.observables, dyn.d)
        self.names = list(setup.observables)
        G, m = setup.grid_size, dyn.m
        if A_fixed is None:
            if setup.mu0 == "uniform":
                mu0 = Mu0(uniform=True)
                prior = np.array([self._uniform_prior(o) for o in self.obs])
            else:
                mu0 = Mu0.atom(xi_state(dyn, self.state))
                prior = np.array([o(self.state) for o in self.obs])
            self.bias = BiasGrid.init(setup.kernel, setup.norm, mu0, G, m,
                                      track_derivative=setup.mean_force,
                                      kernel_bounds=cached_kernel_bounds(setup.kernel, G, m))
            self.adaptive = True
        else:
            A_fixed = np.asarray(A_fixed, dtype=float)
            if A_fixed.shape != (G,) * m:
                raise ConfigError("bias", f"fixed bias must have shape {(G,) * m}")
            self.bias = BiasGrid.from_bias(A_fixed, setup.norm)
            prior = np.array([o(self.state) for o in self.obs]) if setup.mu0 == "atom" \
                else np.array([self._uniform_prior(o) for o in self.obs])
            self.adaptive = False
        nobs = len(self.obs)
        self.acc = EstimatorAccumulators(self.names, prior, 0.0, np.zeros(nobs),
                                         np.zeros(nobs), 0, self.dt,
                                         np.zeros(setup.hist_bins ** m))
        self._h = np.ascontiguousarray(self.bias.h.ravel())
        self._dh = np.ascontiguousarray(self.bias.dh) if self.bias.dh is not None \
            else np.zeros(1)
        self._accv = np.zeros(2)
        self._stats = np.array([np.inf, -np.inf])
        self._info = np.zeros(2, dtype=np.int64)
        self._x = np.ascontiguousarray(self.state.x, dtype=float)
        self._p = np.ascontiguousarray(self.state.p if self.state.p is not None
                                       else np.zeros(dyn.d), dtype=float)
        self._z = np.ascontiguousarray(self.state.z if self.state.z is not None
                                       else np.zeros(1), dtype=float)
        ser = dyn.potential.series
        self._vfreq = np.ascontiguousarray(ser.freqs if len(ser.a) else np.zeros((1, dyn.d)))
        self._va = np.ascontiguousarray(ser.a if len(ser.a) else np.zeros(1))
        self._vb = np.ascontiguousarray(ser.b if len(ser.a) else np.zeros(1))
        self._vquad = float(ser.quad)
        self._obs_arrays = _stack_observables(self.obs, dyn.d)
        keps, kalpha, kcent = self.bias.kernel.parts()
        self._kernel_arrays = (np.ascontiguousarray(keps), np.ascontiguousarray(kalpha),
                               np.ascontiguousarray(kcent))
        code, q = self.bias.norm.core_params()
        self._norm = (code, q, np.ascontiguousarray(
            np.array(self.bias.norm.z0, dtype=float) if self.bias.norm.z0 else np.zeros(2)))

    @staticmethod
    def _uniform_prior(o):
        if o.kind == "p2":
            return 0.0
        return o.series.torus_mean()

    @property
    def noise_dim(self) -> int:
        return self.dyn.noise_dim

    @property
    def time(self) -> float:
        return self.acc.elapsed

    def advance(self, nsteps: int, normals: np.ndarray | None = None):
        """Run ``nsteps`` steps; normals default to draws from this trajectory's stream."""
        if nsteps <= 0:
            return
        if normals is None:
            normals = self.rng.normals(nsteps, self.noise_dim)
        normals = np.ascontiguousarray(normals, dtype=float)
        dyn, s = self.dyn, self.setup
        of, oa, ob, oc, ostart, okind = self._obs_arrays
        keps, kalpha, kcent = self._kernel_arrays
        self._accv[0] = self.acc.S_w
        self._accv[1] = 0.0
        status = self.core.advance(
            FAMILY_CODES[dyn.family], self.dt, float(dyn.gamma), float(dyn.epsilon),
            bool(dyn.potential.periodic), self._vfreq, self._va, self._vb, self._vquad,
            self._x, self._p, self._z, self._h, self._dh, s.grid_size, dyn.m,
            self.adaptive, self.bias.dh is not None, keps, kalpha, kcent,
            float(self.bias.kernel.power), int(self.bias.kernel.wraps),
            self._norm[0], self._norm[1], self._norm[2],
            float(self.bias.bound_m), float(self.bias.bound_M0),
            bool(s.check_bounds and self.adaptive),
            of, oa, ob, oc, ostart, okind, self._accv, self.acc.S_wphi, self.acc.S_phi,
            self.acc.histogram, s.hist_bins, self._stats, normals, int(nsteps),
            int(self.acc.steps), self._info)
        done = int(self._info[1])
        self.acc.S_w = float(self._accv[0])
        if self.adaptive:
            self.bias.theta = self.acc.S_w
        self.acc.steps += done
        self._sync()
        if status == 1:
            raise NumericalBlowup(f"non-finite state at step {int(self._info[0])}",
                                  step=int(self._info[0]), t=self.time,
                                  state=self.state.copy())
        if status == 2:
            self.bias.violations += 1
            raise BoundViolation(
                f"a-priori bound violated at step {int(self._info[0])}: F range "
                f"{tuple(self._stats)} outside [{self.bias.bound_m}, {self.bias.bound_M0}]",
                step=int(self._info[0]))

    def _sync(self):
        self.bias.h = self._h.reshape((self.setup.grid_size,) * self.dyn.m)
        if self.bias.dh is not None:
            self.bias.dh = self._dh
        self.state.x = self._x
        if self.state.p is not None:
            self.state.p = self._p
        if self.state.z is not None:
            self.state.z = self._z

    def step(self, normals=None):
        """A single coupled step (see the module docstring for the ordering)."""
        self.advance(1, None if normals is None else np.reshape(normals, (1, -1)))

    @property
    def F_range(self) -> tuple:
        return float(self._stats[0]), float(self._stats[1])

    def estimates(self) -> dict:
        mu, rho = self.acc.mu_bar(), self.acc.rho_bar()
        return {"mu_bar": dict(zip(self.names, map(float, mu))),
                "rho_bar": dict(zip(self.names, map(float, rho)))}


def abp_step(traj: Trajectory, normals=None):
    traj.step(normals)


def _run(setup, sim: SimConfig, stream_id, A_fixed, A_ref, backend, zero_noise=False):
    t0 = time.perf_counter()
    traj = Trajectory(setup, sim.dt, sim.seed, stream_id, A_fixed=A_fixed, backend=backend,
                      scheme=sim.scheme, zero_noise=zero_noise)
    records = []
    done = 0
    for target in sim.checkpoint_steps():
        while done < target:
            n = min(sim.chunk, target - done)
            traj.advance(n)
            done += n
        rec = {"t": traj.time, **{f"mu_bar[{k}]": v for k, v in
                                  traj.estimates()["mu_bar"].items()},
               **{f"rho_bar[{k}]": v for k, v in traj.estimates()["rho_bar"].items()}}
        if A_ref is not None:
            rec["sup_A_err"] = float(np.max(np.abs(traj.bias.A - A_ref)))
        records.append(rec)
    est = traj.estimates()
    return RunReport(traj.names, est["mu_bar"], est["rho_bar"], traj.bias.copy(),
                     traj.acc.histogram.copy(), records, traj.acc, sim.seed, stream_id,
                     time.perf_counter() - t0, _backend.name_of(traj.core), traj.F_range,
                     traj.state.copy())


def run_abp(setup: ABPSetup, sim: SimConfig, stream_id: int = 0, A_ref=None,
            backend: str | None = None) -> RunReport:
    """Adaptive run to ``sim.t_final`` with records at every checkpoint."""
    return _run(setup, sim, stream_id, None, A_ref, backend)


def run_fixed_bias(setup: ABPSetup, sim: SimConfig, A_fixed, stream_id: int = 0,
                   backend: str | None = None) -> RunReport:
    """Non-adaptive run with weights frozen at N(exp(-A_fixed))."""
    return _run(setup, sim, stream_id, A_fixed, None, backend)


def mean_force(grid: BiasGrid, z) -> float:
    return grid.mean_force(z)


@dataclass
class ReplicaResult:
    reports: list
    failures: dict

    @property
    def ok(self) -> list:
        return [r for r in self.reports if r is not None]


def run_replicas(setup: ABPSetup, sim: SimConfig, M: int | None = None, A_fixed=None,
                 A_ref=None, backend: str | None = None, workers: int | None = None,
                 first_stream: int = 0) -> ReplicaResult:
    """Independent replicas on disjoint streams; failures are collected, not raised."""
    M = M or sim.replicas

    def one(i):
        try:
            return _run(setup, sim, first_stream + i, A_fixed, A_ref, backend), None
        except (NumericalBlowup, BoundViolation) as exc:
            return None, exc

    with ThreadPoolExecutor(max_workers=workers or 1) as pool:
        results = list(pool.map(one, range(M)))
    return ReplicaResult([r for r, _ in results],
                         {first_stream + i: e for i, (_, e) in enumerate(results)
                          if e is not None})


def replica_variance(setup: ABPSetup, sim: SimConfig, M: int, observable: str | None = None,
                     mu_star: float | None = None, A_fixed=None, backend=None,
                     replicas: ReplicaResult | None = None) -> dict:
    """t * Var(mu_bar_t(phi)) across replicas at every checkpoint.

    Returns a dict with columns t, mean, var, t_var, ci_low, ci_high (95%
    chi-square interval for t*Var), bias (when mu_star is given), plus the
    list of failed replica ids.
    """
    from scipy import stats

    if M < 8:
        raise ConfigError("sim.replicas", "replica_variance needs M >= 8")
    res = replicas or run_replicas(setup, sim, M, A_fixed=A_fixed, backend=backend)
    ok = res.ok
    if len(ok) < 2:
        raise NumericalBlowup("fewer than two replicas survived")
    name = observable or setup.observables[0]
    key = f"mu_bar[{name}]"
    table = {"t": [], "mean": [], "var": [], "t_var": [], "ci_low": [], "ci_high": [],
             "bias": []}
    n = len(ok)
    for j in range(len(ok[0].checkpoints)):
        vals = np.array([r.checkpoints[j][key] for r in ok])
        t = ok[0].checkpoints[j]["t"]
        var = float(np.var(vals, ddof=1))
        lo = (n - 1) * var / stats.chi2.ppf(0.975, n - 1)
        hi = (n - 1) * var / stats.chi2.ppf(0.025, n - 1)
        table["t"].append(t)
        table["mean"].append(float(vals.mean()))
        table["var"].append(var)
        table["t_var"].append(t * var)
        table["ci_low"].append(t * lo)
        table["ci_high"].append(t * hi)
        table["bias"].append(float(vals.mean() - mu_star) if mu_star is not None else np.nan)
    table["failed"] = sorted(res.failures)
    table["replicas"] = n
    return table
