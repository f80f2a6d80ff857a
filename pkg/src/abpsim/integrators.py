"""Reproducible random streams and single-step SDE integrators.

Streams use numpy's PCG64 seeded through ``SeedSequence(seed,
spawn_key=(stream_id,))``, so each replica gets an independent,
platform-stable sequence.  The steppers below work on one state at a time and
mirror the per-step arithmetic of the compiled loop.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalBlowup
from .geometry import wrap

GENERATOR_VERSION = "numpy-PCG64-v1"


class RngStream:
    """Standard-normal stream for one replica.

    ``zero_noise=True`` replaces every draw by zeros (test hook for the
    deterministic part of a scheme).
    """

    def __init__(self, seed: int, stream_id: int = 0, zero_noise: bool = False):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.zero_noise = zero_noise
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def normals(self, *shape) -> np.ndarray:
        if self.zero_noise:
            return np.zeros(shape)
        return self._gen.standard_normal(shape)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-3
    scheme: str = "euler_maruyama"

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("sim.dt", "dt must be positive")
        if self.scheme not in ("euler_maruyama", "baoab"):
            raise ConfigError("sim.scheme", f"unknown scheme {self.scheme!r}")

    def check_family(self, family: str):
        if (self.scheme == "baoab") != (family == "langevin"):
            raise ConfigError("sim.scheme", "baoab is used exactly for the langevin family")


def default_scheme(family: str) -> str:
    return "baoab" if family == "langevin" else "euler_maruyama"


def _finite_or_raise(v, t, what):
    if not np.all(np.isfinite(v)):
        raise NumericalBlowup(f"non-finite {what} at t={t}", t=t, state=v)


def em_step(x, drift_vec, dt: float, rng: RngStream, periodic=True, t: float | None = None):
    """x + dt drift + sqrt(2 dt) N(0, I); periodic coordinates are wrapped.

    ``periodic`` is a bool or a boolean mask over the coordinates.
    """
    x = np.asarray(x, dtype=float)
    drift_vec = np.asarray(drift_vec, dtype=float)
    _finite_or_raise(drift_vec, t, "drift")
    new = x + dt * drift_vec + np.sqrt(2.0 * dt) * rng.normals(*x.shape)
    _finite_or_raise(new, t, "state")
    mask = np.broadcast_to(np.asarray(periodic, dtype=bool), new.shape)
    return np.where(mask, wrap(new), new)


def baoab_step(q, p, force_fn, gamma: float, dt: float, rng: RngStream, periodic=True,
               t: float | None = None):
    """One BAOAB step: half kick, half drift, exact friction-noise, half drift, half kick."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    c1 = np.exp(-gamma * dt)
    c2 = np.sqrt(max(0.0, 1.0 - c1 * c1))
    p = p + 0.5 * dt * force_fn(q)
    q = q + 0.5 * dt * p
    if periodic:
        q = wrap(q)
    p = c1 * p + c2 * rng.normals(*p.shape)
    q = q + 0.5 * dt * p
    if periodic:
        q = wrap(q)
    p = p + 0.5 * dt * force_fn(q)
    _finite_or_raise(np.concatenate([q, p]), t, "state")
    return q, p
