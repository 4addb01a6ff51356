"""Command line entry point: ``ctdsim {run,sweep,gen-trace,validate-trace}``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np

from .config import ConfigError, load_config_file
from .engine import STREAM_MOBILITY, ScenarioError, run
from .metrics import collect, csv_row
from .mobility import TraceError, dump_trace, generate_random_waypoint, load_trace, validate_trace
from .sweep import SUMMARY_FIELDS, SUMMARY_HEADER, format_table, run_sweep, summarize, write_rows

log = logging.getLogger("ctdsim")

EXIT_USAGE = 2


def _cmd_run(args) -> int:
    cfg, _ = load_config_file(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    events = run(cfg)
    report = collect(events)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "events.log"), "w") as fh:
        events.write(fh)
    rel = 100.0 if cfg.protocol == "baseline" and report.msgs_total > 0 else None
    with open(os.path.join(args.out, "metrics.csv"), "w") as fh:
        write_rows([csv_row(report, events.meta, rel)], fh)
    print(f"{cfg.protocol}: {report.msgs_total} msgs, delivery ratio {report.delivery_ratio:.3f}, "
          f"far-edge delay {report.far_edge_delay_ms if report.far_edge_delay_ms is not None else 'unreached'}")
    return 0


def _cmd_sweep(args) -> int:
    _, spec = load_config_file(args.config)
    spec.validate()
    log.info("sweep with %d runs", spec.size())
    rows = run_sweep(spec, workers=args.workers)
    summary = summarize(rows)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "results.csv"), "w") as fh:
        write_rows(rows, fh)
    with open(os.path.join(args.out, "summary.csv"), "w") as fh:
        write_rows(summary, fh, SUMMARY_FIELDS, header=SUMMARY_HEADER)
    print(format_table(summary))
    return 0


def _cmd_gen_trace(args) -> int:
    if args.config:
        cfg, _ = load_config_file(args.config)
        width, height, n = cfg.width_m, cfg.height_m, cfg.n_nodes
        duration, vmin, vmax, seed = cfg.duration_ms / 1000, cfg.speed_min, cfg.speed_max, cfg.seed
    else:
        width = height = 500.0
        n, duration, vmin, vmax, seed = 200, 1800.0, 0.1, 1.2, 0
    width = args.width if args.width is not None else width
    height = args.height if args.height is not None else height
    n = args.nodes if args.nodes is not None else n
    duration = args.duration if args.duration is not None else duration
    seed = args.seed if args.seed is not None else seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, STREAM_MOBILITY]))
    trace = generate_random_waypoint((width, height), n, duration, (vmin, vmax), rng)
    if args.out == "-":
        dump_trace(trace, sys.stdout)
    else:
        with open(args.out, "w") as fh:
            dump_trace(trace, fh)
    return 0


def _cmd_validate_trace(args) -> int:
    with open(args.trace) as fh:
        trace = load_trace(fh)
    validate_trace(trace, max_speed=args.max_speed)
    n_wp = sum(len(w) for w in trace.waypoints)
    print(f"ok: {trace.n_nodes} nodes, {n_wp} waypoints, "
          f"{trace.width:g}x{trace.height:g} m, {trace.duration:g} s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctdsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="run a parameter sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, help="parallel runs (default: $CTDSIM_THREADS or 1)")
    s.set_defaults(func=_cmd_sweep)

    g = sub.add_parser("gen-trace", help="write a random-waypoint trace")
    g.add_argument("--config")
    g.add_argument("--width", type=float)
    g.add_argument("--height", type=float)
    g.add_argument("--nodes", type=int)
    g.add_argument("--duration", type=float, help="seconds")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", default="-")
    g.set_defaults(func=_cmd_gen_trace)

    v = sub.add_parser("validate-trace", help="check a trace file")
    v.add_argument("trace")
    v.add_argument("--max-speed", type=float)
    v.set_defaults(func=_cmd_validate_trace)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, TraceError, ValueError) as exc:
        print(f"ctdsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"ctdsim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
