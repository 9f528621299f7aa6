"""Command-line front end: policy tables, simulations, sweeps, traces, and
Monte-Carlo validation of the resolve procedure.

Configuration values resolve in three layers: built-in defaults, then a
flat ``key = value`` config file (``--config``), then explicit flags.
``--print-config`` echoes the fully resolved configuration before running.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

from .analysis import build_policy_table
from .resolver import mc_duration_mean
from .simulator import (SWEEP_COLUMNS, TRACE_COLUMNS, SimConfig, run,
                        run_trace_experiment, sweep)

_DEFAULTS = {
    "M": 2,
    "pe": 0.0,
    "lambda": 0.5,
    "arrivals": "poisson",
    "period": 100,
    "horizon": 100_000,
    "warmup": 10_000,
    "seed": 1,
    "theta": 0.99,
    "controller": "adaptive",
    "episodes": 100,
    "jobs": 1,
    "trials": 1_000_000,
    "m": 3,
}

_TYPES = {
    "M": int, "pe": float, "lambda": str, "arrivals": str, "period": int,
    "horizon": int, "warmup": int, "seed": int, "theta": float,
    "controller": str, "episodes": int, "jobs": int, "trials": int, "m": int,
}


def _read_config_file(path: str) -> dict:
    values = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in _TYPES:
            raise SystemExit(f"{path}: unrecognized config line: {line!r}")
        values[key] = _TYPES[key](value.strip())
    return values


def _resolve(args: argparse.Namespace, keys) -> dict:
    resolved = {k: _DEFAULTS[k] for k in keys}
    if getattr(args, "config", None):
        file_values = _read_config_file(args.config)
        resolved.update({k: v for k, v in file_values.items() if k in keys})
    for key in keys:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            resolved[key] = flag
    if getattr(args, "print_config", False):
        for key in sorted(resolved):
            print(f"{key} = {resolved[key]}")
    return resolved


def _parse_grid(text: str) -> list[float]:
    """Arrival-rate grid: 'a,b,c' or 'start:stop:step' (stop inclusive)."""
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        count = int(round((stop - start) / step)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    return [float(v) for v in text.split(",")]


def _sim_config(resolved: dict, lam: float, **overrides) -> SimConfig:
    kwargs = dict(
        M=resolved["M"],
        lam=lam,
        p_e=resolved["pe"],
        arrival_model=resolved["arrivals"],
        period=resolved["period"],
        horizon=resolved["horizon"],
        warmup=resolved["warmup"],
        seed=resolved["seed"],
        controller=resolved["controller"],
        theta=resolved["theta"],
    )
    kwargs.update(overrides)
    return SimConfig(**kwargs)


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _metric_row(lam: float, metrics) -> list:
    return [
        f"{lam:.6g}",
        f"{metrics.throughput:.6f}",
        f"{metrics.mean_delay:.4f}",
        f"{metrics.collision_rate:.6f}",
        f"{metrics.idle_rate:.6f}",
        f"{metrics.srp_time_fraction:.6f}",
    ]


def _summary_line(label: str, lam: float, metrics) -> str:
    return (
        f"{label}: lambda={lam:.4g} throughput={metrics.throughput:.4f} "
        f"mean_delay={metrics.mean_delay:.2f} idle={metrics.idle_rate:.3f} "
        f"collision={metrics.collision_rate:.4f} srp={metrics.srp_time_fraction:.3f}"
    )


def cmd_tables(args) -> int:
    resolved = _resolve(args, ("pe", "jobs"))
    p_e = resolved["pe"]
    m_list = [int(v) for v in str(args.M or "1,2,3,4,5,10").split(",")]
    tables = [build_policy_table(M, p_e) for M in m_list]

    print(f"capability constants (p_e = {p_e:g})")
    print(f"{'M':>3}  {'x_star':>8}  {'s_star':>8}  {'c_m':>8}")
    for pt in tables:
        print(f"{pt.M:>3}  {pt.x_star:>8.4f}  {pt.s_star:>8.4f}  {pt.c_m:>8.4f}")

    biggest = max(tables, key=lambda pt: pt.M)
    if biggest.M >= 2:
        print(f"\nresolve durations (p_e = {p_e:g})")
        print(f"{'m':>3}  {'E[X_m]':>8}  {'retx_p':>8}")
        for m in range(2, biggest.M + 1):
            print(f"{m:>3}  {biggest.srp_mean_for(m):>8.4f}  "
                  f"{biggest.retx_prob_for(m):>8.4f}")

    if args.out:
        rows = [
            [pt.M, pt.p_e, f"{pt.x_star:.6f}", f"{pt.s_star:.6f}", f"{pt.c_m:.6f}",
             ";".join(f"{v:.6f}" for v in pt.srp_mean),
             ";".join(f"{v:.6f}" for v in pt.retx_probs)]
            for pt in tables
        ]
        _write_csv(args.out, ("M", "p_e", "x_star", "s_star", "c_m",
                              "srp_mean", "retx_probs"), rows)
        print(f"\nwrote {args.out}")
    if args.policy_out:
        outdir = Path(args.policy_out)
        outdir.mkdir(parents=True, exist_ok=True)
        for pt in tables:
            (outdir / f"policy_M{pt.M}_pe{pt.p_e:g}.txt").write_text(pt.to_text())
        print(f"wrote {len(tables)} policy files to {outdir}")
    return 0


def cmd_simulate(args) -> int:
    resolved = _resolve(args, ("M", "pe", "lambda", "arrivals", "period",
                               "horizon", "warmup", "seed", "theta", "controller"))
    lam = float(resolved["lambda"])
    config = _sim_config(
        resolved, lam,
        collect_estimator_trace=bool(args.estimator_trace),
        collect_backlog_trace=bool(args.backlog_trace),
    )
    metrics = run(config)
    print(_summary_line("simulate", lam, metrics))
    if args.out:
        _write_csv(args.out, SWEEP_COLUMNS, [_metric_row(lam, metrics)])
        print(f"wrote {args.out}")
    if args.estimator_trace:
        rows = [(slot, kind, f"{nu:.6f}", f"{lam_e:.6f}", f"{p:.6f}")
                for slot, kind, nu, lam_e, p in metrics.estimator_trace]
        _write_csv(args.estimator_trace,
                   ("slot", "event", "nu", "lambda_e", "p_star"), rows)
        print(f"wrote {args.estimator_trace}")
    if args.backlog_trace:
        rows = [(slot, f"{row[0]:.4f}", f"{row[1]:.6f}")
                for slot, row in enumerate(metrics.backlog_trace)]
        _write_csv(args.backlog_trace, TRACE_COLUMNS, rows)
        print(f"wrote {args.backlog_trace}")
    return 0


def cmd_sweep(args) -> int:
    resolved = _resolve(args, ("M", "pe", "lambda", "arrivals", "period",
                               "horizon", "warmup", "seed", "theta",
                               "controller", "jobs"))
    lams = _parse_grid(str(resolved["lambda"]))
    base = _sim_config(resolved, lams[0])
    results = sweep(base, lams, jobs=int(resolved["jobs"]))
    rows = [_metric_row(lam, metrics) for lam, metrics in results]
    for (lam, metrics) in results:
        print(_summary_line("sweep", lam, metrics))
    if args.out:
        _write_csv(args.out, SWEEP_COLUMNS, rows)
        print(f"wrote {args.out}")
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(SWEEP_COLUMNS)
        writer.writerows(rows)
    return 0


def cmd_trace(args) -> int:
    resolved = _resolve(args, ("M", "pe", "horizon", "seed", "theta",
                               "episodes", "jobs"))
    trace = run_trace_experiment(
        M=resolved["M"], horizon=resolved["horizon"],
        episodes=resolved["episodes"], p_e=resolved["pe"],
        theta=resolved["theta"], seed=resolved["seed"],
        jobs=int(resolved["jobs"]),
    )
    err = float(abs(trace[:, 1] - trace[:, 0]).mean())
    print(f"trace: episodes={resolved['episodes']} horizon={resolved['horizon']} "
          f"mean|nu-n|={err:.3f}")
    if args.out:
        rows = [(slot, f"{row[0]:.4f}", f"{row[1]:.6f}")
                for slot, row in enumerate(trace)]
        _write_csv(args.out, TRACE_COLUMNS, rows)
        print(f"wrote {args.out}")
    return 0


def cmd_validate_srp(args) -> int:
    resolved = _resolve(args, ("m", "pe", "trials", "seed", "jobs"))
    m, p_e = resolved["m"], resolved["pe"]
    trials = resolved["trials"]
    policy = build_policy_table(max(m, 2), p_e)
    analytic = policy.srp_mean_for(m)
    empirical, stderr = mc_duration_mean(
        m, policy.retx_probs, p_e, trials, resolved["seed"],
        jobs=int(resolved["jobs"]),
    )
    diff = abs(empirical - analytic)
    bound = 3.0 * stderr
    ok = diff <= bound or math.isclose(diff, bound)
    print(f"SRP validation: m={m} p_e={p_e:g} trials={trials}")
    print(f"  analytic mean : {analytic:.6f}")
    print(f"  empirical mean: {empirical:.6f}  (stderr {stderr:.6f})")
    print(f"  |diff| = {diff:.6f} {'<=' if ok else '>'} 3*stderr = {bound:.6f}"
          f"  ->  {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def _add_common(parser: argparse.ArgumentParser, *, sim: bool) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--print-config", action="store_true",
                        help="print the resolved configuration before running")
    parser.add_argument("--pe", type=float, help="per-signal SIC failure probability")
    parser.add_argument("--seed", type=int, help="master random seed")
    if sim:
        parser.add_argument("--M", type=int, help="SIC capability")
        parser.add_argument("--lambda", dest="lambda_", type=str,
                            help="mean arrival rate (sweep: list or start:stop:step)")
        parser.add_argument("--arrivals", choices=("poisson", "onoff"),
                            help="arrival model")
        parser.add_argument("--period", type=int, help="on-off phase length in slots")
        parser.add_argument("--horizon", type=int, help="total simulated slots")
        parser.add_argument("--warmup", type=int,
                            help="slots excluded from metrics")
        parser.add_argument("--theta", type=float, help="estimator update weight")
        parser.add_argument("--controller", choices=("adaptive", "genie"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sicra",
        description="SIC random access: analysis tables, simulation, validation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_tables = sub.add_parser("tables", help="print/emit the policy constants")
    _add_common(p_tables, sim=False)
    p_tables.add_argument("--M", type=str, help="comma-separated capabilities")
    p_tables.add_argument("--jobs", type=int)
    p_tables.add_argument("--out", help="CSV output path")
    p_tables.add_argument("--policy-out", help="directory for policy text files")
    p_tables.set_defaults(fn=cmd_tables)

    p_sim = sub.add_parser("simulate", help="run one configuration")
    _add_common(p_sim, sim=True)
    p_sim.add_argument("--out", help="CSV output path (single metrics row)")
    p_sim.add_argument("--estimator-trace", help="CSV path for per-embedded-point state")
    p_sim.add_argument("--backlog-trace", help="CSV path for per-slot backlog trace")
    p_sim.set_defaults(fn=cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="run an arrival-rate grid")
    _add_common(p_sweep, sim=True)
    p_sweep.add_argument("--jobs", type=int, help="parallel workers")
    p_sweep.add_argument("--out", help="CSV output path")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_trace = sub.add_parser("trace", help="episode-averaged backlog trace experiment")
    _add_common(p_trace, sim=True)
    p_trace.add_argument("--episodes", type=int)
    p_trace.add_argument("--jobs", type=int)
    p_trace.add_argument("--out", help="CSV output path")
    p_trace.set_defaults(fn=cmd_trace)

    p_val = sub.add_parser("validate-srp",
                           help="Monte-Carlo check of resolve durations")
    _add_common(p_val, sim=False)
    p_val.add_argument("--m", type=int, help="group size to validate")
    p_val.add_argument("--trials", type=int)
    p_val.add_argument("--jobs", type=int)
    p_val.set_defaults(fn=cmd_validate_srp)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if hasattr(args, "lambda_") and args.lambda_ is not None:
        setattr(args, "lambda", args.lambda_)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
