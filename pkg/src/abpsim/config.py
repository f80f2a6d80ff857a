"""Experiment configuration: YAML documents with a fixed key schema.

Every key has a default; unknown keys and type mismatches are rejected with
the dotted key path.  Constraint checks live in the constructors of the
objects the config resolves to, so the messages are the same everywhere.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import numpy as np
import yaml

from .engine import ABPSetup, SimConfig
from .errors import ConfigError
from .kernel import KernelSpec
from .model import (POTENTIAL_PRESETS, DynamicsSpec, PotentialSpec, ReactionCoordinate,
                    potential_preset)
from .normalization import NormalizationSpec
from .spde import SpdeModel

NUMBER = (int, float)
ANY = object

# value = default; a tuple (default, types) pins the accepted types
SCHEMA = {
    "model": {
        "dynamics": ("brownian", str),
        "gamma": (1.0, NUMBER),
        "epsilon": (0.1, NUMBER),
        "beta": (1.0, NUMBER),
        "potential": {
            "preset": (None, (str, type(None))),
            "kind": ("cosine", str),
            "d": (None, (int, type(None))),
            "terms": ([], list),
            "quad": (0.0, NUMBER),
            "table": (None, (list, type(None))),
        },
        "xi": {"m": (1, int)},
        "x0": (None, (list, type(None))),
        "p0": (None, (list, type(None))),
        "z0": (None, (list, type(None))),
        "mu0": ("atom", str),
    },
    "kernel": {
        "family": ("gaussian", str),
        "epsilon": (0.05, NUMBER),
        "alpha": (0.9, NUMBER),
        "wraps": (5, int),
        "components": ([], list),
        "power": (2, int),
    },
    "norm": {"kind": ("l1", (str,)), "k": (None, (int, type(None)))},
    "grid": {"size": (256, int), "refresh_stride": (1, int)},
    "sim": {
        "dt": (1e-3, NUMBER),
        "t_final": (None, (int, float, type(None))),
        "scheme": (None, (str, type(None))),
        "seed": (0, int),
        "replicas": (1, int),
        "checkpoints": ([], list),
        "max_steps": (1e8, NUMBER),
    },
    "observables": (["cos1"], list),
    "estimators": {
        "mean_force": (False, bool),
        "check_bounds": (True, bool),
        "hist_bins": (50, int),
    },
    "fixed_bias": {
        "source": ("zero", str),
        "amplitude": (1.0, NUMBER),
        "path": (None, (str, type(None))),
    },
    "variance": {"observable": (None, (str, type(None))), "formula": ("weighted", str)},
    "spde": {
        "modes": (32, int),
        "grid": (128, int),
        "nonlinearity": ("cosine", str),
        "c": (1.0, NUMBER),
        "allow_allen_cahn": (False, bool),
    },
    "output": {
        "dir": (None, (str, type(None))),
        "prefix": ("run", str),
        "formats": (["csv", "json"], list),
    },
    "t_final": (None, (int, float, type(None))),
}


def _defaults(schema):
    out = {}
    for k, v in schema.items():
        out[k] = _defaults(v) if isinstance(v, dict) else copy.deepcopy(v[0])
    return out


def _merge(schema, doc, path=""):
    out = _defaults(schema)
    if doc is None:
        return out
    if not isinstance(doc, dict):
        raise ConfigError(path.rstrip(".") or "<root>", "expected a mapping")
    for key, value in doc.items():
        full = f"{path}{key}"
        if key not in schema:
            raise ConfigError(full, "unknown key")
        spec = schema[key]
        if isinstance(spec, dict):
            out[key] = _merge(spec, value, full + ".")
            continue
        types = spec[1]
        allowed = types if isinstance(types, tuple) else (types,)
        if isinstance(value, bool) and bool not in allowed:
            raise ConfigError(full, f"expected {_type_name(types)}, got a boolean")
        if not isinstance(value, types):
            raise ConfigError(full, f"expected {_type_name(types)}, got {type(value).__name__}")
        out[key] = value
    return out


def _type_name(types):
    types = types if isinstance(types, tuple) else (types,)
    return " or ".join("null" if t is type(None) else t.__name__ for t in types)


@dataclass
class ExperimentConfig:
    raw: dict

    # -- resolved objects ------------------------------------------------
    def potential(self) -> PotentialSpec:
        m = self.raw["model"]
        pot = m["potential"]
        beta = float(m["beta"])
        if pot["preset"] is not None:
            if pot["preset"] not in POTENTIAL_PRESETS:
                raise ConfigError("model.potential.preset",
                                  f"unknown preset {pot['preset']!r}; "
                                  f"choose from {', '.join(POTENTIAL_PRESETS)}")
            return potential_preset(pot["preset"], beta=beta, d=pot["d"])
        d = pot["d"]
        if d is None:
            raise ConfigError("model.potential.d", "d is required without a preset")
        if pot["kind"] == "tabulated":
            if pot["table"] is None:
                raise ConfigError("model.potential.table", "tabulated potentials need a table")
            return PotentialSpec("tabulated", d, beta=beta, table=np.array(pot["table"], float))
        terms = []
        for i, t in enumerate(pot["terms"]):
            key = f"model.potential.terms[{i}]"
            if not (isinstance(t, list) and len(t) in (2, 3)):
                raise ConfigError(key, "a term is [coef, [n_1..n_d]] or [coef, [..], cos|sin]")
            kind = t[2] if len(t) == 3 else "cos"
            if kind not in ("cos", "sin") or not isinstance(t[0], NUMBER) \
                    or not isinstance(t[1], list) or len(t[1]) != d:
                raise ConfigError(key, "malformed term")
            terms.append((float(t[0]), tuple(int(v) for v in t[1]), kind))
        return PotentialSpec(pot["kind"], d, tuple(terms), quad=float(pot["quad"]), beta=beta)

    def dynamics(self) -> DynamicsSpec:
        m = self.raw["model"]
        return DynamicsSpec(m["dynamics"], self.potential(), ReactionCoordinate(m["xi"]["m"]),
                            gamma=float(m["gamma"]), epsilon=float(m["epsilon"]))

    def kernel(self) -> KernelSpec:
        k = self.raw["kernel"]
        if k["family"] == "mixture":
            comps, centers = [], []
            for i, c in enumerate(k["components"]):
                if not isinstance(c, dict) or set(c) - {"epsilon", "alpha", "center"}:
                    raise ConfigError(f"kernel.components[{i}]",
                                      "components take epsilon, alpha, center")
                comps.append(KernelSpec("gaussian", float(c.get("epsilon", k["epsilon"])),
                                        float(c.get("alpha", k["alpha"])), k["wraps"]))
                centers.append(float(c.get("center", 0.0)))
            return KernelSpec("mixture", wraps=k["wraps"], components=tuple(comps),
                              centers=tuple(centers), power=k["power"])
        if k["family"] == "constant":
            return KernelSpec.constant()
        return KernelSpec(k["family"], float(k["epsilon"]), float(k["alpha"]), k["wraps"])

    def norm(self) -> NormalizationSpec:
        return NormalizationSpec.parse(self.raw["norm"]["kind"], self.raw["norm"]["k"])

    def setup(self) -> ABPSetup:
        m, e, g = self.raw["model"], self.raw["estimators"], self.raw["grid"]
        if g["refresh_stride"] != 1:
            raise ConfigError("grid.refresh_stride",
                              "only stride 1 is supported; the bias is read from the "
                              "current accumulation at every step")
        tup = lambda v: None if v is None else tuple(float(a) for a in v)
        return ABPSetup(self.dynamics(), self.kernel(), self.norm(), g["size"],
                        tuple(self.raw["observables"]), tup(m["x0"]), tup(m["p0"]),
                        tup(m["z0"]), m["mu0"], e["mean_force"], e["check_bounds"],
                        e["hist_bins"])

    def sim(self) -> SimConfig:
        s = self.raw["sim"]
        t_final = s["t_final"] if s["t_final"] is not None else self.raw["t_final"]
        if t_final is None:
            raise ConfigError("sim.t_final", "t_final is required")
        return SimConfig(float(s["dt"]), float(t_final), s["seed"], s["replicas"],
                         tuple(float(c) for c in s["checkpoints"]), s["scheme"],
                         float(s["max_steps"]))

    def spde_model(self) -> SpdeModel:
        s = self.raw["spde"]
        return SpdeModel(s["nonlinearity"], float(s["c"]), s["modes"], s["grid"],
                         s["allow_allen_cahn"])

    def validate(self, spde: bool = False) -> "ExperimentConfig":
        self.sim()
        if spde:
            self.spde_model()
            self.kernel()
        else:
            self.setup()
            if self.raw["spde"] != _defaults(SCHEMA["spde"]):
                self.spde_model()
        if self.raw["variance"]["formula"] not in ("weighted", "unweighted"):
            raise ConfigError("variance.formula", "formula must be weighted or unweighted")
        if self.raw["fixed_bias"]["source"] not in ("zero", "a_infinity", "a_star",
                                                    "cosine", "file"):
            raise ConfigError("fixed_bias.source", "unknown fixed-bias source")
        return self

    def resolved(self) -> dict:
        out = copy.deepcopy(self.raw)
        out["sim"]["t_final"] = self.sim().t_final
        out.pop("t_final", None)
        return out

    def echo(self) -> str:
        return json.dumps(self.resolved(), sort_keys=True)


def parse_config(text: str, spde: bool | None = None) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<document>", f"not valid YAML: {exc}") from None
    if spde is None:
        spde = isinstance(doc, dict) and "spde" in doc and "model" not in doc
    if not spde and not (isinstance(doc, dict) and "model" in doc):
        raise ConfigError("model", "the model block is required")
    cfg = ExperimentConfig(_merge(SCHEMA, doc))
    return cfg.validate(spde=spde)


def load_config(path: str, spde: bool | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), spde)
