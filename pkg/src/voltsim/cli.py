"""Command-line entry point: ``voltsim <subcommand> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

from . import experiments
from .config import ENV_VAR, load_config
from .errors import ConfigError, RangeError, TraceParseError

log = logging.getLogger("voltsim")

EXIT_OK, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2

COMMANDS = {
    "simulate": experiments.cmd_simulate,
    "sweep-voltage": experiments.cmd_sweep_voltage,
    "compare": experiments.cmd_compare,
    "errmap": experiments.cmd_errmap,
    "fit-loss-model": experiments.cmd_fit_loss_model,
}

HELP = {
    "simulate": "run every configured workload under the configured policy",
    "sweep-voltage": "error fraction and DRAM energy versus array voltage at fixed timings",
    "compare": "energy and performance of several policies against the nominal baseline",
    "errmap": "per-row error probability map with clustering and ECC report",
    "fit-loss-model": "fit the performance-loss predictor from static-voltage runs",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voltsim", description="Trace-driven DRAM array-voltage simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help=f"YAML config file (default: ${ENV_VAR}, else built-in defaults)")
        p.add_argument("--out", help="output directory (overrides the config's 'output')")
        p.add_argument("--seed", type=int, help="root random seed (overrides the config's 'seed')")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key by dotted path, e.g. sim.page_policy=closed (repeatable)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output={args.out}")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, overrides)
        out = Path(cfg.output)
        log.info("running %s into %s", args.command, out)
        COMMANDS[args.command](cfg, out, args.jobs)
    except (ConfigError, TraceParseError, RangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # invariant violations and bugs
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            traceback.print_exc()
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
