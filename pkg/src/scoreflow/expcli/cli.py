"""Command-line entry point.

    scoreflow {gaussian|gmm|morph|langevin|quiver|validate} --config PATH
              [--seed N] [--iters N] [--out DIR]

Exit codes: 0 success, 1 run failure (e.g. divergence), 2 usage or config error.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, KINDS, load_config, with_overrides
from .experiments import run_experiment

COMMANDS = (*KINDS, "validate")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message, self)


class _UsageError(Exception):
    def __init__(self, message, parser):
        super().__init__(message)
        self.parser = parser


def build_parser():
    p = _Parser(prog="scoreflow", description="Score-matching and kernel-flow generator experiments.")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}", parser_class=_Parser)
    sub.required = True
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run a {name} experiment" if name != "validate" else "check a config file")
        sp.add_argument("--config", required=True, help="path to a JSON experiment config")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--iters", type=int, help="override training iterations or Langevin steps")
        sp.add_argument("--out", help="override the output directory")
    return p


def _report(summary):
    lines = [f"{summary['kind']} run finished (seed {summary['seed']})"]
    final = summary.get("final")
    if final:
        lines.append("  " + ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in final.items()))
    for key in ("initial_energy_distance", "final_energy_distance", "nodes"):
        if key in summary:
            lines.append(f"  {key}={summary[key]:.6g}" if isinstance(summary[key], float) else f"  {key}={summary[key]}")
    return "\n".join(lines)


def cli_main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        exc.parser.print_usage(stderr)
        print(f"error: {exc}", file=stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        cfg = with_overrides(load_config(args.config), args.seed, args.iters, args.out)
        if args.command != "validate" and cfg.kind != args.command:
            raise ConfigError(f"config describes a {cfg.kind!r} experiment, not {args.command!r}")
    except ConfigError as exc:
        sub.print_usage(stderr)
        print(f"error: {exc}", file=stderr)
        return 2
    if args.command == "validate":
        print(f"{args.config}: valid {cfg.kind} config", file=stdout)
        return 0
    try:
        summary = run_experiment(cfg)
    except (ArithmeticError, ValueError, OSError) as exc:
        print(f"error: {cfg.kind} run failed: {exc}", file=stderr)
        return 1
    print(_report(summary), file=stdout)
    print(f"  artifacts in {cfg.out}", file=stdout)
    return 0


def main():
    sys.exit(cli_main())
