"""Command-line driver: ``abpsim <command> [config.yaml] [options]``.

Exit status is 0 on success, 2 for configuration errors, 3 when a trajectory
blows up or leaves the a-priori bias bounds, and 4 when an acceptance check
fails.  Failures also print a one-line JSON record on stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import BoundViolation, ConfigError, NumericalBlowup
from .io import default_output_dir, read_csv, write_csv, write_json

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_ACCEPTANCE = 0, 2, 3, 4


class ReplicaFailure(Exception):
    """Some replicas failed; outputs for the survivors were still written."""

    def __init__(self, failures: dict):
        self.failures = failures
        super().__init__(f"{len(failures)} replica(s) failed")


# ----------------------------------------------------------------- helpers

def _load(args, spde=False):
    from .config import load_config

    cfg = load_config(args.config, spde=spde)
    if args.seed is not None:
        cfg.raw["sim"]["seed"] = args.seed
    return cfg


def _outdir(args, cfg=None) -> str:
    if args.out:
        return args.out
    if cfg is not None and cfg.raw["output"]["dir"]:
        return cfg.raw["output"]["dir"]
    return default_output_dir()


def _prefix(cfg) -> str:
    return cfg.raw["output"]["prefix"] if cfg is not None else "abpsim"


def _wants(cfg, fmt: str) -> bool:
    return cfg is None or fmt in cfg.raw["output"]["formats"]


def _timeseries_rows(reports):
    names = reports[0].checkpoints[0].keys() - {"t"}
    cols = ["replica", "t"] + sorted(names)
    rows = []
    for r in reports:
        for rec in r.checkpoints:
            rows.append([r.stream_id, rec["t"]] + [rec[c] for c in cols[2:]])
    return cols, rows


def _emit_runs(args, cfg, reports, failures, extra=None):
    out, pre, seed = _outdir(args, cfg), _prefix(cfg), cfg.raw["sim"]["seed"]
    echo = cfg.echo()
    written = []
    if reports and _wants(cfg, "csv"):
        cols, rows = _timeseries_rows(reports)
        path = os.path.join(out, f"{pre}_timeseries.csv")
        write_csv(path, cols, rows, echo, seed)
        written.append(path)
        names, table = reports[0].bias_final.table()
        path = os.path.join(out, f"{pre}_bias.csv")
        write_csv(path, names, table.tolist(), echo, seed)
        written.append(path)
    if _wants(cfg, "json"):
        payload = {"replicas": [r.summary() for r in reports],
                   "failures": {str(k): str(v) for k, v in failures.items()}}
        if reports:
            payload["mu_bar_mean"] = {k: float(np.mean([r.mu_bar[k] for r in reports]))
                                      for k in reports[0].names}
            payload["rho_bar_mean"] = {k: float(np.mean([r.rho_bar[k] for r in reports]))
                                       for k in reports[0].names}
        payload.update(extra or {})
        path = os.path.join(out, f"{pre}_summary.json")
        write_json(path, payload, cfg.resolved(), seed)
        written.append(path)
    for p in written:
        print(p)
    if failures:
        raise ReplicaFailure(failures)


def fixed_bias_array(cfg) -> np.ndarray:
    """Resolve ``fixed_bias.source`` to a bias table on the grid."""
    from .oracle import a_infinity, free_energy_star

    fb, G = cfg.raw["fixed_bias"], cfg.raw["grid"]["size"]
    setup = cfg.setup()
    m = setup.m
    src = fb["source"]
    if src == "zero":
        return np.zeros((G,) * m)
    if src == "cosine":
        z = np.arange(G) / G
        A = fb["amplitude"] * np.cos(2 * np.pi * z)
        return A if m == 1 else np.broadcast_to(A.reshape((G,) + (1,) * (m - 1)),
                                                (G,) * m).copy()
    if src == "a_star":
        return free_energy_star(setup.dyn.potential, m, G)
    if src == "a_infinity":
        if setup.dyn.family == "extended":
            from .oracle import a_infinity_extended
            return a_infinity_extended(setup.dyn.potential, setup.kernel,
                                       setup.dyn.epsilon, m, G)
        return a_infinity(setup.dyn.potential, setup.kernel, m, G)
    if fb["path"] is None:
        raise ConfigError("fixed_bias.path", "a path is required for source 'file'")
    try:
        _, cols, data = read_csv(fb["path"])
    except (OSError, ValueError, StopIteration) as exc:
        raise ConfigError("fixed_bias.path", f"cannot read bias table: {exc}") from None
    if "A" not in cols or data.shape[0] != G ** m:
        raise ConfigError("fixed_bias.path", f"expected an 'A' column with {G ** m} rows")
    return data[:, cols.index("A")].reshape((G,) * m)


# ---------------------------------------------------------------- commands

def command_run(args) -> int:
    from .engine import run_replicas

    cfg = _load(args)
    setup, sim = cfg.setup(), cfg.sim()
    res = run_replicas(setup, sim, sim.replicas, backend=args.backend, workers=args.workers)
    _emit_runs(args, cfg, res.ok, res.failures)
    return EXIT_OK


def command_fixed_bias(args) -> int:
    from .engine import run_replicas

    cfg = _load(args)
    setup, sim = cfg.setup(), cfg.sim()
    A = fixed_bias_array(cfg)
    res = run_replicas(setup, sim, sim.replicas, A_fixed=A, backend=args.backend,
                       workers=args.workers)
    _emit_runs(args, cfg, res.ok, res.failures,
               {"fixed_bias_source": cfg.raw["fixed_bias"]["source"]})
    return EXIT_OK


def command_variance(args) -> int:
    from .engine import replica_variance, run_replicas
    from .oracle import a_infinity, asymptotic_variance, quadrature_mu_star

    cfg = _load(args)
    setup, sim = cfg.setup(), cfg.sim()
    pot = setup.dyn.potential
    name = cfg.raw["variance"]["observable"] or setup.observables[0]
    mu_star = None if name == "p2" else quadrature_mu_star(pot, name)
    A_fixed = fixed_bias_array(cfg) if args.fixed else None
    res = run_replicas(setup, sim, sim.replicas, A_fixed=A_fixed, backend=args.backend,
                       workers=args.workers)
    table = replica_variance(setup, sim, sim.replicas, name, mu_star, replicas=res)
    oracle = None
    if pot.d == 1 and setup.m == 1 and setup.dyn.family == "brownian" and name != "p2":
        A = A_fixed if A_fixed is not None else a_infinity(pot, setup.kernel, 1,
                                                           cfg.raw["grid"]["size"])
        oracle = asymptotic_variance(pot, A, name, formula=cfg.raw["variance"]["formula"])
    cols = ["t", "mean", "var", "t_var", "ci_low", "ci_high", "bias"]
    out, pre, seed = _outdir(args, cfg), _prefix(cfg), sim.seed
    written = []
    if _wants(cfg, "csv"):
        p = os.path.join(out, f"{pre}_variance.csv")
        write_csv(p, cols, list(zip(*[table[c] for c in cols])), cfg.echo(), seed)
        written.append(p)
    if _wants(cfg, "json"):
        t = np.array(table["t"])
        late = t >= t[-1] / 2
        payload = {"observable": name, "mu_star": mu_star, "V_inf_oracle": oracle,
                   "plateau": float(np.mean(np.array(table["t_var"])[late])),
                   "replicas_ok": table["replicas"], "failed": table["failed"],
                   "mode": "fixed" if args.fixed else "adaptive"}
        p = os.path.join(out, f"{pre}_variance_summary.json")
        write_json(p, payload, cfg.resolved(), seed)
        written.append(p)
    for p in written:
        print(p)
    if res.failures:
        raise ReplicaFailure(res.failures)
    return EXIT_OK


def command_oracle(args) -> int:
    from .kernel import KernelSpec
    from .model import DynamicsSpec, potential_preset
    from .oracle import build_tables

    cfg = None
    if args.config:
        cfg = _load(args)
        setup = cfg.setup()
        dyn, kernel, G, obs = setup.dyn, setup.kernel, setup.grid_size, setup.observables
    else:
        dyn = DynamicsSpec("brownian", potential_preset(args.preset))
        kernel, G, obs = KernelSpec(), args.grid, tuple(args.observables.split(","))
    tab = build_tables(dyn.potential, kernel, obs, dyn.m, G, family=dyn.family,
                       eps_ext=dyn.epsilon if dyn.family == "extended" else None)
    out = _outdir(args, cfg)
    pre = _prefix(cfg) if cfg else f"oracle_{args.preset}"
    echo = cfg.echo() if cfg else json.dumps({"preset": args.preset, "grid": G,
                                              "kernel": "gaussian eps=0.05 alpha=0.9"})
    m = dyn.m
    axes = np.meshgrid(*[np.arange(G) / G] * m, indexing="ij")
    cols = [f"z_{j + 1}" for j in range(m)] + ["A_star", "A_inf", "density_A_star",
                                               "density_A_inf"]
    data = np.column_stack([a.ravel() for a in axes]
                           + [tab.A_star.ravel(), tab.A_inf.ravel(),
                              np.exp(-tab.A_star).ravel(), np.exp(-tab.A_inf).ravel()])
    written = []
    p = os.path.join(out, f"{pre}_tables.csv")
    write_csv(p, cols, data.tolist(), echo)
    written.append(p)
    if tab.psi is not None:
        p = os.path.join(out, f"{pre}_poisson.csv")
        x = np.arange(len(tab.psi)) / len(tab.psi)
        write_csv(p, ["x", "psi"], np.column_stack([x, tab.psi]).tolist(), echo)
        written.append(p)
    payload = {"mu_star": tab.mu_star_phi, "mu_star_A_inf": tab.mu_star_A_inf_phi,
               "Z_A_inf": tab.Z_A_inf, "V_inf": tab.V_inf,
               "density_mean_A_star": float(np.mean(np.exp(-tab.A_star))),
               "density_mean_A_inf": float(np.mean(np.exp(-tab.A_inf)))}
    p = os.path.join(out, f"{pre}_summary.json")
    write_json(p, payload, cfg.resolved() if cfg else json.loads(echo))
    written.append(p)
    for p in written:
        print(p)
    return EXIT_OK


def command_spde(args) -> int:
    from .spde import gaussian_a_infinity, mean_field_variance, mode_variances, run_spde_abp

    cfg = _load(args, spde=True)
    model, kernel, sim = cfg.spde_model(), cfg.kernel(), cfg.sim()
    G = cfg.raw["grid"]["size"]
    A_ref = gaussian_a_infinity(kernel, G) if model.nonlinearity == "none" else None
    reports, failures = [], {}
    for i in range(sim.replicas):
        try:
            reports.append(run_spde_abp(model, kernel, sim, G, stream_id=i, A_ref=A_ref,
                                        backend=args.backend))
        except (NumericalBlowup, BoundViolation) as exc:
            failures[i] = exc
    extra = {"mode_variances": [mode_variances(r).tolist() for r in reports],
             "mean_field_variance": [mean_field_variance(r) for r in reports]}
    _emit_runs(args, cfg, reports, failures, extra)
    return EXIT_OK


def command_check(args) -> int:
    from . import acceptance

    selected = None
    if args.criteria:
        try:
            selected = [int(c) for c in args.criteria.split(",")]
        except ValueError:
            raise ConfigError("--criteria", "expected a comma-separated list of integers") \
                from None
        bad = [c for c in selected if c not in acceptance.CRITERIA]
        if bad:
            raise ConfigError("--criteria", f"unknown criteria {bad}")
    results = acceptance.run_all(selected)
    path = os.path.join(_outdir(args), "acceptance.json")
    write_json(path, {"results": [{"criterion": r.number, "title": r.title,
                                   "passed": r.passed, "seconds": r.seconds,
                                   "details": r.details} for r in results]},
               seed=acceptance.SEED)
    print(path)
    failed = [r.number for r in results if not r.passed]
    if failed:
        _failure_record("AcceptanceFailure", f"criteria failed: {failed}", criteria=failed)
        return EXIT_ACCEPTANCE
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="abpsim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"abpsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("config", help="YAML experiment file")
        sp.add_argument("--out", help="output directory (default: $ABPSIM_OUTPUT_DIR or cwd)")
        sp.add_argument("--seed", type=int, help="override sim.seed")
        sp.add_argument("--backend", choices=("auto", "compiled", "python"), default=None)
        sp.add_argument("--workers", type=int, default=None, help="replica threads")

    sp = sub.add_parser("run", help="adaptive runs")
    common(sp)
    sp.set_defaults(func=command_run)
    sp = sub.add_parser("run-fixed-bias", help="non-adaptive baseline with a frozen bias")
    common(sp)
    sp.set_defaults(func=command_fixed_bias)
    sp = sub.add_parser("variance", help="replica t*Var table against the Poisson oracle")
    common(sp)
    sp.add_argument("--fixed", action="store_true", help="use the fixed_bias block instead")
    sp.set_defaults(func=command_variance)
    sp = sub.add_parser("oracle", help="quadrature tables for a preset or config")
    common(sp, config=False)
    sp.add_argument("config", nargs="?", default=None)
    sp.add_argument("--preset", default="bessel1d")
    sp.add_argument("--grid", type=int, default=256)
    sp.add_argument("--observables", default="cos1")
    sp.set_defaults(func=command_oracle)
    sp = sub.add_parser("spde-run", help="spectral SPDE runs")
    common(sp)
    sp.set_defaults(func=command_spde)
    sp = sub.add_parser("check", help="run the acceptance suite")
    common(sp, config=False)
    sp.add_argument("--criteria", help="comma-separated subset, e.g. 1,7")
    sp.set_defaults(func=command_check)
    return p


def _failure_record(kind: str, message: str, **extra):
    print(json.dumps({"status": "error", "error": kind, "message": message, **extra},
                     default=str), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _failure_record("ConfigError", str(exc), key=exc.key)
        return EXIT_CONFIG
    except (NumericalBlowup, BoundViolation) as exc:
        _failure_record(type(exc).__name__, str(exc), step=getattr(exc, "step", None))
        return EXIT_BLOWUP
    except ReplicaFailure as exc:
        _failure_record("ReplicaFailure", str(exc),
                        replicas={str(k): f"{type(v).__name__}: {v}"
                                  for k, v in exc.failures.items()})
        return EXIT_BLOWUP
    except (FileNotFoundError, IsADirectoryError) as exc:
        _failure_record("ConfigError", str(exc), key="config")
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        # constructor validation (e.g. kernel.alpha out of range) surfaces here
        _failure_record("ConfigError", str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
