"""Command line entry point.

Exit codes: 0 success, 2 bad configuration, 3 verification failure,
4 no feasible point.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

from .config import load_config
from .errors import ConfigError, NoFeasiblePointError
from .harness import cmd_duality, cmd_selftest, cmd_simulate, cmd_solve, cmd_verify_cps

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3
EXIT_INFEASIBLE = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frictionopt",
        description="Robust utility maximization under proportional transaction costs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("simulate", "simulate the model family on the shared noise panel"),
        ("verify-cps", "construct and verify a consistent price system"),
        ("solve", "solve the robust utility maximization problem"),
        ("duality", "solve and run duality diagnostics"),
        ("selftest", "run the built-in smoke battery"),
    ):
        p = sub.add_parser(name, help=helptext)
        if name != "selftest":
            p.add_argument("--config", required=True, help="path to a JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--threads", type=int, default=None, help="worker threads (or ENGINE_THREADS)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        return cmd_selftest(args.out)
    threads = args.threads
    if threads is None and os.environ.get("ENGINE_THREADS"):
        try:
            threads = int(os.environ["ENGINE_THREADS"])
        except ValueError:
            print("error: ENGINE_THREADS must be an integer", file=sys.stderr)
            return EXIT_CONFIG
    try:
        cfg = load_config(args.config, overrides={"seed": args.seed, "threads": threads, "out": args.out})
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        if args.command == "verify-cps":
            return cmd_verify_cps(cfg, args.out)
        if args.command == "solve":
            return cmd_solve(cfg, args.out)
        return cmd_duality(cfg, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoFeasiblePointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
