"""Command-line interface.

Subcommands: run, sweep-distance, sweep-speed, print-default-config, score.
Exit codes: 0 success, 1 config validation/parse error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from .config import SimConfig, default_config, default_config_text, format_config, parse_config
from .errors import InvalidConfig, ParseError, PestLaserError, ValidationError


def _load_config(args) -> SimConfig:
    if args.config:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
    else:
        cfg = default_config()
    overrides = {}
    if args.seed is not None:
        overrides[("sim", "seed")] = args.seed
    if getattr(args, "trials", None) is not None:
        overrides[("sim", "trials")] = args.trials
    return cfg.with_overrides(overrides) if overrides else cfg


def _add_common(p):
    p.add_argument("--config", metavar="PATH", help="config file (sectioned key=value)")
    p.add_argument("--seed", type=int, metavar="N", help="override sim.seed")
    p.add_argument("--jobs", type=int, default=1, metavar="N",
                   help="trial-level worker processes")
    p.add_argument("--out", metavar="PATH", help="CSV output path (default stdout)")
    p.add_argument("--chart", metavar="PATH", help="SVG chart output path")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pestlaser",
                                 description="laser pest-neutralization simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one or more trials of the default scenario")
    _add_common(p)
    p.add_argument("--trials", type=int, metavar="N", help="override sim.trials")
    p.add_argument("--event-log", metavar="PATH",
                   help="dump the first trial's event log as NDJSON")

    p = sub.add_parser("sweep-distance", help="efficiency vs camera-crop distance")
    _add_common(p)

    p = sub.add_parser("sweep-speed", help="efficiency and rate vs platform speed")
    _add_common(p)

    sub.add_parser("print-default-config", help="emit the canonical default config")

    p = sub.add_parser("score", help="recompute counts from a saved event log")
    p.add_argument("--event-log", metavar="PATH", required=True)
    return ap


def _emit(results, args, xlabel):
    if args.out:
        harness.emit_csv(results, args.out)
    else:
        harness.emit_csv(results, sys.stdout)
    if args.chart:
        harness.emit_chart(harness.summarize(results), args.chart, xlabel=xlabel)


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "print-default-config":
            sys.stdout.write(default_config_text())
            return 0
        if args.command == "score":
            stats = harness.score_event_log(args.event_log)
            for k, v in stats.items():
                print(f"{k}: {v}")
            return 0
        cfg = _load_config(args)
        if args.command == "run":
            trials = cfg.get("sim", "trials")
            base_seed = cfg.get("sim", "seed")
            results = []
            for ti in range(trials):
                keep = bool(args.event_log) and ti == 0
                results.append(harness.run_trial(
                    cfg, harness.derive_seed(base_seed, 0, ti),
                    trial=ti, keep_log=keep))
            if args.event_log:
                harness.dump_event_log(results[0], args.event_log)
            _emit(results, args, xlabel="distance (m)")
            return 0
        if args.command == "sweep-distance":
            results = harness.sweep_distance(cfg, jobs=args.jobs)
            _emit(results, args, xlabel="distance (m)")
            return 0
        if args.command == "sweep-speed":
            results = harness.sweep_speed(cfg, jobs=args.jobs)
            _emit(results, args, xlabel="platform speed (mm/s)")
            return 0
        raise AssertionError(args.command)
    except (ParseError, ValidationError, InvalidConfig) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except PestLaserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
