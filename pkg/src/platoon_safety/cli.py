"""Command line entry point for the platoon braking simulator."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .analysis import trace_report
from .channels import ChannelKind
from .engine import run
from .export import export_summary, export_table, export_trace, read_trace
from .scenario import ScenarioError, load_scenario
from .sweep import AGGREGATE_COLUMNS, derive_seeds, sweep

CHANNELS = [c.value for c in ChannelKind]


def _scenario(args):
    sc = load_scenario(args.scenario)
    if args.ts is not None:
        sc = sc.replace(ts=args.ts)
    return sc


def cmd_run(args) -> int:
    sc = _scenario(args)
    trace = run(sc, args.channel, args.seed)
    out = Path(args.out)
    export_trace(trace, out / "trace.csv")
    export_summary([trace.summary], out / "summary.csv")
    s = trace.summary
    print(f"{s.scenario}/{s.channel} seed {s.seed}: r={s.r_steps:g} steps, max slip {s.max_slip:.4f}, "
          f"final gap {s.final_gap_m:.2f} m, collided={s.collided}")
    return 0


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    seeds = derive_seeds(sc.seed, args.seeds)
    result = sweep(sc, args.channels, seeds, workers=args.workers)
    out = Path(args.out)
    export_summary(result.rows, out / "summary.csv")
    aggregates = result.aggregates()
    export_table(AGGREGATE_COLUMNS, aggregates, out / "aggregate.csv")
    for line in aggregates:
        print(f"{line[0]:>5}: runs {line[1]}, collision rate {line[3]:.2f}, "
              f"max slip mean {line[6]:.4f}, final gap mean {line[10]:.2f} m")
    return 1 if result.errors else 0


def cmd_analyze(args) -> int:
    table = read_trace(args.trace)
    sc = load_scenario(args.scenario)
    report = trace_report(table, sc.gains, sc.vehicle, sc.abs, subject=args.vehicle,
                          gap_target=args.gap_target, slip_limit=args.slip_limit, ts=args.ts)
    clean = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in report.items()}
    print(json.dumps(clean, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="platoon-safety", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario and write trace.csv and summary.csv")
    p.add_argument("--scenario", required=True, help="scenario file or bundled name (case1, case2)")
    p.add_argument("--channel", choices=CHANNELS, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--ts", type=float, default=None, help="override the sampling time")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run channels x seeds and write summary.csv and aggregate.csv")
    p.add_argument("--scenario", required=True)
    p.add_argument("--channels", nargs="+", choices=CHANNELS, default=CHANNELS)
    p.add_argument("--seeds", type=int, required=True, help="number of seeds derived from the scenario seed")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--ts", type=float, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="recompute braking quantities from a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--scenario", default="case1", help="source of gains and vehicle parameters")
    p.add_argument("--vehicle", type=int, default=None, help="follower to analyze (default: behind the detector)")
    p.add_argument("--gap-target", type=float, default=-10.0)
    p.add_argument("--slip-limit", type=float, default=0.22)
    p.add_argument("--ts", type=float, default=None, help="override the sampling time read from the trace")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: seed must be non-negative", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
