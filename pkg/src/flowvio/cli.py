"""Command-line entry point: flowvio {simulate, monte-carlo, estimate-direction, diagnose-observability}."""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import harness, observability
from .geometry import exp_so3


def _common(p):
    p.add_argument("--config", default=None,
                   help="YAML config file or bundled scenario name (paper-a, paper-b)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--oracle-direction", action="store_true", help="feed the true velocity direction")
    p.add_argument("--no-magnetometer", action="store_true")
    p.add_argument("--inertial-formulation", action="store_true")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config entry; may be repeated")
    p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    p.add_argument("--plot", action="store_true", help="also write a PNG next to each CSV")


def build_parser():
    parser = argparse.ArgumentParser(prog="flowvio", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="single run of the full cascade")
    _common(p)

    p = sub.add_parser("monte-carlo", help="seeded Monte Carlo campaign with percentile bands")
    _common(p)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("estimate-direction", help="velocity-direction estimator only")
    _common(p)
    p.add_argument("--sweep", action="store_true",
                   help="iterations in {3, 10, 20} x first {4, 8} landmarks")
    p.add_argument("--after", type=float, default=5.0, help="steady-state averaging start [s]")

    p = sub.add_parser("diagnose-observability", help="Gramian, PE metric and factorization check")
    _common(p)
    p.add_argument("--delta", type=float, default=5.0, help="window length [s]")
    p.add_argument("--dt", type=float, default=1e-3, help="quadrature step [s]")
    p.add_argument("--stride", type=float, default=5.0, help="spacing of window starts [s]")
    return parser


DEFAULT_CONFIG = {
    "simulate": "paper-b",
    "monte-carlo": "paper-b",
    "estimate-direction": "paper-a",
    "diagnose-observability": "paper-a",
}


def resolve_config(args):
    data = config_mod.load_dict(args.config or DEFAULT_CONFIG[args.command])
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.oracle_direction:
        overrides.append("mode.oracle_direction=true")
    if args.no_magnetometer:
        overrides.append("mode.use_magnetometer=false")
    if args.inertial_formulation:
        overrides.append("mode.inertial_formulation=true")
    if getattr(args, "runs", None) is not None:
        overrides.append(f"monte_carlo.n_runs={args.runs}")
    if getattr(args, "workers", None) is not None:
        overrides.append(f"monte_carlo.workers={args.workers}")
    return config_mod.from_dict(config_mod.apply_overrides(data, overrides))


def _finite(x):
    return None if x is None or not np.isfinite(x) else float(x)


def cmd_simulate(cfg, args, out):
    res = harness.run_single(cfg)
    path = harness.export(res, out / "simulate.csv", args.plot)
    final = {k: _finite(v) for k, v in res.summary["final"].items()}
    return {"csv": str(path), "final": final, "skipped_updates": res.summary["skipped_updates"]}


def cmd_monte_carlo(cfg, args, out):
    mc = harness.run_monte_carlo(cfg)
    path = harness.export(mc, out / "monte_carlo.csv", args.plot)
    final = {m: [_finite(x) for x in mc.bands[m][:, -1]] for m in harness.METRICS}
    return {"csv": str(path), "n_runs": mc.n_runs, "failures": mc.failures,
            "final_p5_p50_p95": final}


def cmd_estimate_direction(cfg, args, out):
    if args.sweep:
        results = harness.run_direction_sweep(cfg)
    else:
        results = {(cfg.flow.iterations, len(cfg.scenario.landmark_array)): harness.run_direction(cfg)}
    report = {}
    for (n_iter, n_lm), res in results.items():
        path = harness.export(res, out / f"direction_N{n_iter}_L{n_lm}.csv", args.plot)
        report[f"N{n_iter}_L{n_lm}"] = {
            "csv": str(path),
            "steady_state_mean": _finite(harness.steady_state_mean(res, after=args.after)),
        }
    return report


OBS_COLUMNS = ("t_start", "pe_metric", "gramian_min_eig", "factorization_err")


class _Table:
    def __init__(self, columns, rows):
        self.columns = columns
        self.data = np.array(rows, dtype=float).reshape(-1, len(columns))


def cmd_diagnose(cfg, args, out):
    sc = cfg.scenario
    profile = harness.build_profile(sc)
    traj = observability.simulate_trajectory(
        profile, sc.duration, args.dt, R0=exp_so3(np.array(sc.R0_rotvec)),
        xi0=np.array(sc.xi0), v0=np.array(sc.v0))
    rows = []
    starts = np.arange(0.0, sc.duration - args.delta + 1e-9, args.stride)
    for t in starts:
        rep = observability.gramian(traj, t, args.delta, args.dt)
        err = observability.gramian_factorization_check(traj, t, args.delta, args.dt)
        rows.append((t, rep.pe_metric, rep.min_eig, err))
    table = _Table(OBS_COLUMNS, rows)
    path = harness.export(table, out / "observability.csv")
    return {"csv": str(path), "kalman_rank": observability.kalman_rank(),
            "min_pe_metric": _finite(min((r[1] for r in rows), default=np.nan)),
            "max_factorization_err": _finite(max((r[3] for r in rows), default=np.nan))}


COMMANDS = {
    "simulate": cmd_simulate,
    "monte-carlo": cmd_monte_carlo,
    "estimate-direction": cmd_estimate_direction,
    "diagnose-observability": cmd_diagnose,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.print_config:
            sys.stdout.write(config_mod.dump_yaml(cfg))
            return 0
        out = Path(args.out_dir)
        report = COMMANDS[args.command](cfg, args, out)
        print(json.dumps({"status": "ok", "command": args.command, **report}))
        return 0
    except Exception as exc:
        print(json.dumps({"status": "error", "command": args.command,
                          "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
