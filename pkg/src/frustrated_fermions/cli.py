"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance failure (``oracle-check`` deviation above tolerance).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import fits, theory
from .errors import (
    ConsistencyError,
    DegeneracyError,
    DivergenceError,
    EnsembleFailure,
    FitError,
    NoiseDesyncError,
    ParameterError,
    TrajectoryAborted,
)
from .fock import oracle_trajectory_compare
from .harness import RunConfig, run_ensemble, run_sweep, sweep_configs
from .io import emit_outputs, read_csv_columns, write_observables_csv, write_theory_tables
from .state import ModelParams

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 2, 3, 4


def _bool(s: str) -> bool:
    v = s.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {s!r}")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config document")
    g = p.add_argument_group("config overrides")
    g.add_argument("--L", type=int)
    g.add_argument("--N", type=int)
    g.add_argument("--J", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--theta-over-pi", dest="theta_over_pi", type=float)
    g.add_argument("--dt", type=float)
    g.add_argument("--measurement-only", dest="measurement_only", type=_bool)
    g.add_argument("--n-traj", dest="n_traj", type=int)
    g.add_argument("--master-seed", dest="master_seed", type=int)
    g.add_argument("--t-equil-factor", dest="t_equil_factor", type=float)
    g.add_argument("--t-avg-window", dest="t_avg_window", type=float)
    g.add_argument("--sample-stride", dest="sample_stride", type=float)
    g.add_argument("--observables", nargs="+")
    g.add_argument("--output-path", dest="output_path")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")


_CONFIG_DESTS = (
    "L", "N", "J", "gamma", "theta_over_pi", "dt", "measurement_only", "n_traj", "master_seed",
    "t_equil_factor", "t_avg_window", "sample_stride", "observables", "output_path",
)


def _config_from_args(args, skip=()) -> RunConfig:
    d = {}
    if args.config is not None:
        try:
            d = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ParameterError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(d, dict):
            raise ParameterError("config must be a JSON object")
    for key in _CONFIG_DESTS:
        v = getattr(args, key, None)
        if v is not None and key not in skip:
            d[key] = v
    if "L" not in d:
        if "L" in skip and args.L:
            d["L"] = args.L[0]
        else:
            raise ParameterError("L must be given in the config or with --L")
    return RunConfig.from_dict(d)


def _summary_line(res) -> str:
    m, e = res.means, res.errors
    p = res.run_config.params
    parts = [f"L={p.L} gamma={p.gamma:g} theta/pi={p.theta / math.pi:g} n_traj={res.n_traj}"]
    for k in ("S_half", "C2_half", "G_AB"):
        if k in m:
            parts.append(f"{k}={m[k]:.6g}+-{e[k]:.2g}")
    return "  ".join(parts)


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    res = run_ensemble(cfg, args.workers)
    print(_summary_line(res))
    if cfg.output_path:
        for f in emit_outputs(res, cfg.output_path, theory_tables=args.theory):
            print(f"wrote {f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = _config_from_args(args, skip=("L", "gamma", "theta_over_pi"))
    configs = sweep_configs(base, L=args.L, gamma=args.gamma, theta_over_pi=args.theta_over_pi)
    results = run_sweep(configs, args.workers)
    for r in results:
        print(_summary_line(r))
    if base.output_path:
        out = Path(base.output_path)
        for r in results:
            p = r.run_config.params
            emit_outputs(r, out / f"L{p.L}_gamma{p.gamma:g}_theta{r.run_config.theta_over_pi:g}")
        write_observables_csv(results, out / "observables.csv")
        print(f"wrote {len(results)} result directories and {out / 'observables.csv'}")
    return EXIT_OK


def cmd_theory(args) -> int:
    theta = args.theta_over_pi * math.pi
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        for f in write_theory_tables(args.J, args.gamma, theta, args.L, out):
            print(f"wrote {f}")
        return EXIT_OK
    print("name,value,formula")
    for pred in theory.prediction_table(args.J, args.gamma, theta, args.L):
        print(f"{pred.name},{pred.value!r},\"{pred.formula}\"")
    return EXIT_OK


def cmd_oracle(args) -> int:
    params = ModelParams(
        L=args.L, N=args.N, J=args.J, gamma=args.gamma, theta=args.theta_over_pi * math.pi,
        dt=args.dt, measurement_only=args.measurement_only,
    )
    tol = args.tol if args.tol is not None else (1e-10 if params.gamma == 0 else 1e-8)
    rep = oracle_trajectory_compare(params, args.seed, args.trajectory_id, args.steps, args.mode)
    out = rep.to_dict(params)
    out["tolerance"] = tol
    out["passed"] = rep.max_deviation < tol
    print(json.dumps(out, indent=1))
    return EXIT_OK if out["passed"] else EXIT_ACCEPTANCE


def cmd_fit(args) -> int:
    cols = read_csv_columns(args.input, [args.x, args.y])
    x, y = cols[args.x], cols[args.y]
    if args.model == "corrected_power_law":
        res = fits.fit_corrected_power_law(x, y)
    elif args.model == "exponential_decay":
        res = fits.fit_exponential_decay(x, y, args.L_min)
    else:
        res = fits.fit_power_law(x, y)
    out = {
        "model": res.model,
        "params": res.params,
        "stderr": res.stderr,
        "fit_range": list(res.fit_range),
        "residual_norm": res.residual_norm,
    }
    if res.note:
        out["note"] = res.note
    if "log_derivative" in res.extra:
        out["log_derivative"] = res.extra["log_derivative"].tolist()
    print(json.dumps(out, indent=1, allow_nan=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frustrated-fermions", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one ensemble and write its outputs")
    _add_config_flags(p)
    p.add_argument("--theory", action="store_true", help="also write theory overlay tables")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="cartesian grid over L, gamma and theta/pi")
    _add_config_flags(p)
    # grid axes replace the scalar overrides
    for a in p._actions:
        if a.dest in ("L", "gamma", "theta_over_pi"):
            a.nargs = "+"
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("theory", help="print or write closed-form predictions")
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--theta-over-pi", dest="theta_over_pi", type=float, default=1.0)
    p.add_argument("--L", type=int, default=64)
    p.add_argument("--output", help="directory for CSV tables (default: print to stdout)")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("oracle-check", help="compare the Gaussian engine with exact many-body evolution")
    p.add_argument("--L", type=int, default=6)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--theta-over-pi", dest="theta_over_pi", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=0.02)
    p.add_argument("--measurement-only", dest="measurement_only", action="store_true")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trajectory-id", dest="trajectory_id", type=int, default=0)
    p.add_argument("--mode", choices=("shared", "strict"), default="shared")
    p.add_argument("--tol", type=float, default=None, help="default 1e-8 (1e-10 when gamma = 0)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("fit", help="fit two columns of a CSV file")
    p.add_argument("input", type=Path)
    p.add_argument("--model", choices=("corrected_power_law", "exponential_decay", "power_law"), required=True)
    p.add_argument("--x", default="L")
    p.add_argument("--y", required=True)
    p.add_argument("--L-min", dest="L_min", type=float, default=0.0)
    p.set_defaults(func=cmd_fit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, FitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrajectoryAborted, EnsembleFailure, DegeneracyError, ConsistencyError, DivergenceError, NoiseDesyncError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
