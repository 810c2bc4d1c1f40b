"""Command-line interface.

``sojourn <command> --config <file|preset> [--seed N] [--out DIR] [--threads N] [--gate]``

Each command runs one experiment kind on the config's model and body; a
config written for another kind keeps its model, body and grid and drops
kind-specific options and gates. Exit codes: 0 success, 2 config error,
3 numerical failure, 4 gate failure (only with ``--gate``).
"""

import argparse
from dataclasses import replace
import sys

from .errors import ConfigError, NumericalError
from .experiment import PRESETS, THREADS_ENV, ExperimentConfig, default_threads, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_GATE = 0, 2, 3, 4

COMMANDS = {
    "density": "geometry",
    "covariance": "covariance",
    "variance": "variance",
    "simulate": "simulate",
    "experiment": None,  # the config's own kind
    "rosenblatt": "rosenblatt",
}


def build_parser():
    p = argparse.ArgumentParser(prog="sojourn", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help=f"JSON config file or preset ({', '.join(sorted(PRESETS))})")
        s.add_argument("--seed", type=int, help="master seed (overrides the config)")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
        s.add_argument("--gate", action="store_true", help="exit with status 4 when an acceptance gate fails")
    return p


def _resolve(args):
    cfg = ExperimentConfig.load(args.config)
    kind = COMMANDS[args.command]
    if kind is not None and kind != cfg.kind:
        cfg = replace(cfg, kind=kind, options={}, gates={})
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output=replace(cfg.output, dir=args.out))
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        threads = default_threads() if args.threads is None else args.threads
        result = run_experiment(cfg, threads=threads)
        paths = result.write()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for g in result.gates:
        print(g.line())
    for path in paths:
        print(f"wrote {path}")
    if args.gate and not result.passed:
        return EXIT_GATE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
