"""Command-line entry point: ``frontspeed <command> [--config FILE] ...``.

Configuration is one TOML document whose sections are named after the types
they fill (``[Nonlinearity]``, ``[CrossGrid]``, ``[SimGrid]`` ...). Unknown
sections or keys are errors. Results go to files only; diagnostics go to
standard error.

Exit codes: 0 success, 2 invalid configuration, 3 solver failure,
64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import shutil
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .cell_problem import solve_cell
from .corrector import corrector_residual, decay_report, solve_corrector, solvability_defect
from .direct_sim import SimGrid, integrate, linear_growth_study
from .ensemble import EnsembleConfig, calibrate_kappa, fit_quadratic_law, run_ensemble
from .errors import ConfigError, ContractError, ParameterError, SolverError
from .front_solver import front_residual, solve_front
from .gaussian_shear import (
    GENERATOR,
    CovarianceModel,
    CrossGrid,
    constant_shear,
    cosine_shear,
    kl_decompose,
    sample_field,
)
from .minmax import estimate_speed
from .reaction import Nonlinearity, analytic_bistable_front

log = logging.getLogger("frontspeed")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_USAGE = 0, 2, 3, 64
OUT_ENV = "FRONTSPEED_OUT"

DEFAULTS = {
    "Nonlinearity": {"kind": "bistable", "mu": 0.25, "amplitude": 1.0},
    "FrontProfile": {"half_width": 30.0, "n_nodes": 2049, "analytic": True},
    "CrossGrid": {"L": 1.0, "n": 32, "dim": 1},
    "CovarianceModel": {"kind": "ornstein_uhlenbeck", "sigma2": 1.0, "corr_len": 1.0},
    "ShearSample": {"kind": "gaussian", "amplitude": 1.0, "mode": 1, "value": 1.0, "kl_modes": None},
    "TestFunction": {"delta": 0.1},
    "SimGrid": {
        "x1_min": -40.0, "x1_max": 40.0, "hx": 0.1, "dt": None, "T": 150.0,
        "scheme": "imex", "advection": "auto", "safety": 0.9, "output_every": 0.5,
    },
    "Sweep": {"deltas": [0.025, 0.05, 0.1, 0.15, 0.2], "baseline": True},
    "EnsembleConfig": {
        "n_samples": 256, "delta": 0.05, "q": 0.5, "kappa": 1.0, "epsilon_target": 0.05,
        "route": "asymptotic_only", "kl_modes": None, "direct_hx": 0.1, "direct_T": 100.0,
        "direct_span": 40.0, "direct_frame": "comoving",
    },
    "KappaCalibration": {"enabled": False, "pilot_seed": 1000, "n_pilot": 256, "delta": 0.1, "quantile": 0.95},
    "LargeDelta": {"deltas": [2.0, 4.0, 8.0, 16.0, 32.0]},
}

COMMANDS = ("front", "sample-field", "cell", "corrector", "bounds", "direct", "sweep", "ensemble", "large-delta")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------- serialisation


def _encode(x, indent=0):
    pad = "  " * indent
    if isinstance(x, dict):
        if not x:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k))}: {_encode(v, indent + 1)}' for k, v in x.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(x, (list, tuple)):
        if not x:
            return "[]"
        return "[" + ", ".join(_encode(v, indent + 1) for v in x) + "]"
    if isinstance(x, np.ndarray):
        return _encode(x.tolist(), indent)
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return f"{x:.17g}"
    if x is None:
        return "null"
    return json.dumps(str(x))


def dumps17(obj) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _encode(obj) + "\n"


def _flatten(d, prefix=""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        else:
            yield key, v


class Outputs:
    """Collect files in a temporary directory; publish them only on success."""

    def __init__(self, out_dir: Path, fmt: str):
        self.out_dir = out_dir
        self.fmt = fmt
        out_dir.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".partial-", dir=out_dir))
        self.names: list[str] = []

    def path(self, name: str) -> Path:
        self.names.append(name)
        return self.tmp / name

    def record(self, stem: str, rec: dict) -> None:
        if self.fmt == "json":
            self.path(f"{stem}.json").write_text(dumps17(rec))
        else:
            lines = ["key,value"]
            for k, v in _flatten(rec):
                val = _encode(v) if not isinstance(v, str) else v
                lines.append(f'{k},"{val}"' if "," in val else f"{k},{val}")
            self.path(f"{stem}.csv").write_text("\n".join(lines) + "\n")

    def commit(self, manifest: dict) -> list[str]:
        final = []
        for name in self.names:
            os.replace(self.tmp / name, self.out_dir / name)
            final.append(str(self.out_dir / name))
        manifest["outputs"] = final
        mpath = self.tmp / "manifest.json"
        mpath.write_text(dumps17(manifest))
        os.replace(mpath, self.out_dir / "manifest.json")
        self.discard()
        return final

    def discard(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


# ---------------------------------------------------------------- configuration


def _check_type(sec, key, default, value):
    num = (int, float)
    if isinstance(default, bool) or isinstance(value, bool):
        ok = isinstance(value, bool) and (default is None or isinstance(default, bool))
    elif isinstance(default, int):
        ok = isinstance(value, int)
    elif isinstance(default, float) or default is None:
        ok = isinstance(value, num)
    else:
        ok = isinstance(value, type(default))
    if isinstance(default, list) and ok:
        ok = all(isinstance(x, num) and not isinstance(x, bool) for x in value)
    if not ok:
        raise ConfigError(f"[{sec}] {key} has the wrong type: {value!r}")


def load_config(path: str | None) -> dict:
    """Defaults merged with the TOML document; unknown sections/keys raise ConfigError."""
    cfg = {k: dict(v) for k, v in DEFAULTS.items()}
    if path is None:
        return cfg
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for sec, vals in doc.items():
        if sec not in cfg:
            raise ConfigError(f"unknown config section [{sec}]")
        if not isinstance(vals, dict):
            raise ConfigError(f"[{sec}] must be a table")
        for k, v in vals.items():
            if k not in cfg[sec]:
                raise ConfigError(f"unknown key {k!r} in [{sec}]")
            _check_type(sec, k, cfg[sec][k], v)
            cfg[sec][k] = v
    return cfg


def _nl(cfg) -> Nonlinearity:
    return Nonlinearity(**cfg["Nonlinearity"])


def _front(cfg):
    nl = _nl(cfg)
    fpc = cfg["FrontProfile"]
    if nl.kind == "bistable" and fpc["analytic"]:
        return analytic_bistable_front(nl.mu, fpc["half_width"], fpc["n_nodes"])
    return solve_front(nl, fpc["half_width"], fpc["n_nodes"])


def _grid(cfg) -> CrossGrid:
    return CrossGrid(**cfg["CrossGrid"])


def _shear(cfg, seed):
    grid = _grid(cfg)
    sc = cfg["ShearSample"]
    kind = sc["kind"]
    if kind == "gaussian":
        model = CovarianceModel(dim=grid.dim, **cfg["CovarianceModel"])
        return sample_field(kl_decompose(model, grid, sc["kl_modes"]), seed)
    if kind == "cosine":
        return cosine_shear(grid, sc["amplitude"], sc["mode"])
    if kind == "constant":
        return constant_shear(grid, sc["value"])
    raise ConfigError(f"unknown shear kind {kind!r}")


def _sim_grid(cfg) -> SimGrid:
    return SimGrid(cross=_grid(cfg), **cfg["SimGrid"])


def _ensemble_cfg(cfg, seed, threads) -> EnsembleConfig:
    grid = cfg["CrossGrid"]
    ec = dict(cfg["EnsembleConfig"])
    return EnsembleConfig(
        model=CovarianceModel(dim=grid["dim"], **cfg["CovarianceModel"]),
        nl=_nl(cfg),
        seed=seed,
        L=grid["L"],
        cross_n=grid["n"],
        front_half_width=cfg["FrontProfile"]["half_width"],
        front_nodes=cfg["FrontProfile"]["n_nodes"],
        threads=threads,
        **ec,
    )


# ---------------------------------------------------------------- commands


def cmd_front(cfg, args, out: Outputs):
    fp = _front(cfg)
    fp.to_csv(out.path("profile.csv"))
    rec = {"c0": fp.c0, "exact": fp.exact, "residual": front_residual(fp), **fp.meta}
    out.record("front", rec)


def cmd_sample_field(cfg, args, out):
    b = _shear(cfg, args.seed)
    b.to_csv(out.path("shear.csv"))
    rec = {
        "label": b.label,
        "seed": b.seed,
        "generator": b.generator or GENERATOR,
        "mean": b.mean,
        "sup_norm": b.sup_norm,
        "holder_norm_0.5": b.holder_norm(0.5),
    }
    out.record("shear", rec)


def cmd_cell(cfg, args, out):
    b = _shear(cfg, args.seed)
    fp = _front(cfg)
    cs = solve_cell(b.fluct, b.grid, fp.c0)
    np.savetxt(out.path("chi.csv"), np.column_stack([b.grid.points, cs.chi.ravel()]),
               delimiter=",", fmt="%.17g", comments="",
               header=",".join([f"x{i + 1}" for i in range(b.grid.dim)] + ["chi"]))
    out.record("cell", {"b_bar": b.mean, **cs.summary()})


def cmd_corrector(cfg, args, out):
    b = _shear(cfg, args.seed)
    fp = _front(cfg)
    cs = solve_cell(b.fluct, b.grid, fp.c0)
    cf = solve_corrector(cs, fp)
    cf.to_csv(out.path("corrector.csv"))
    rep = decay_report(cf.modes, fp)
    rep["pde_residual"] = float(np.max(np.abs(corrector_residual(cf, cs, fp))))
    rep["solvability_defect"] = solvability_defect(cs, fp)
    out.record("corrector", rep)


def cmd_bounds(cfg, args, out):
    b = _shear(cfg, args.seed)
    fp = _front(cfg)
    est = estimate_speed(fp, b, cfg["TestFunction"]["delta"], remainders=True)
    out.record("bounds", est.record())


def cmd_direct(cfg, args, out):
    b = _shear(cfg, args.seed)
    delta = cfg["TestFunction"]["delta"]
    tr = integrate(_nl(cfg), b, delta, _sim_grid(cfg))
    tr.to_csv(out.path("trace.csv"))
    out.record("direct", tr.record())
    if not tr.converged:
        raise SolverError(f"front speed not converged (fit residual {tr.fit_residual:.3e})")


def cmd_sweep(cfg, args, out):
    b = _shear(cfg, args.seed)
    nl, grid = _nl(cfg), _sim_grid(cfg)
    fp = _front(cfg)
    deltas = [float(d) for d in cfg["Sweep"]["deltas"]]
    base = 0.0
    if cfg["Sweep"]["baseline"]:
        base = integrate(nl, constant_shear(b.grid, 0.0), 0.0, grid).fitted_speed - fp.c0
    rows, speeds, conv = [], [], []
    for d in deltas:
        tr = integrate(nl, b, d, grid)
        est = estimate_speed(fp, b, d)
        c = tr.fitted_speed - base
        speeds.append(c)
        conv.append(tr.converged)
        rows.append([d, c, tr.fitted_speed, tr.fit_residual, float(tr.converged),
                     est.asymptotic,
                     np.nan if est.lower is None else est.lower,
                     np.nan if est.upper is None else est.upper])
    np.savetxt(out.path("sweep.csv"), np.array(rows), delimiter=",", fmt="%.17g", comments="",
               header="delta,c_direct,c_direct_raw,fit_residual,converged,c_asym,lower,upper")
    fit = fit_quadratic_law(deltas, speeds, conv)
    out.record("fit", {**fit.record(), "baseline_offset": base, "c0": fp.c0,
                       "gamma_cell": solve_cell(b.fluct, b.grid, fp.c0).gamma})


def cmd_ensemble(cfg, args, out):
    ecfg = _ensemble_cfg(cfg, args.seed, args.threads)
    cal = None
    kc = cfg["KappaCalibration"]
    if kc["enabled"]:
        cal = calibrate_kappa(ecfg, kc["pilot_seed"], kc["n_pilot"], kc["delta"], kc["quantile"])
        ecfg = EnsembleConfig(**{**ecfg.__dict__, "kappa": cal.kappa})
    rep = run_ensemble(ecfg)
    rep.to_csv(out.path("samples.csv"))
    d = rep.to_dict()
    d.pop("records")
    if cal is not None:
        d["calibration"] = cal.__dict__
    out.record("ensemble", d)


def cmd_large_delta(cfg, args, out):
    b = _shear(cfg, args.seed)
    rep = linear_growth_study(_nl(cfg), b, cfg["LargeDelta"]["deltas"])
    rec = rep.record()
    np.savetxt(out.path("large_delta.csv"),
               np.column_stack([rep.deltas, rep.speeds, rep.ratios, rep.converged]),
               delimiter=",", fmt="%.17g", header="delta,c,c_over_delta,converged", comments="")
    out.record("large_delta", rec)


HANDLERS = {
    "front": cmd_front,
    "sample-field": cmd_sample_field,
    "cell": cmd_cell,
    "corrector": cmd_corrector,
    "bounds": cmd_bounds,
    "direct": cmd_direct,
    "sweep": cmd_sweep,
    "ensemble": cmd_ensemble,
    "large-delta": cmd_large_delta,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="frontspeed", description="Front speeds in randomly sheared channels.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--seed", type=int, default=0, help="shear / ensemble seed (default 0)")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./frontspeed_out)")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="result record format")
    p.add_argument("--threads", type=int, default=1, help="worker cap for ensembles")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"frontspeed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("frontspeed: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"frontspeed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out or os.environ.get(OUT_ENV) or "frontspeed_out")
    started = datetime.now(timezone.utc).isoformat()
    out = Outputs(out_dir, args.format)
    try:
        HANDLERS[args.command](cfg, args, out)
    except (ConfigError, ParameterError, ContractError) as exc:
        out.discard()
        print(f"frontspeed: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        out.discard()
        print(f"frontspeed: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except BaseException:
        out.discard()
        raise
    manifest = {
        "command": args.command,
        "argv": argv,
        "config": cfg,
        "seed": args.seed,
        "format": args.format,
        "threads": args.threads,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "generator": GENERATOR,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    out.commit(manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
