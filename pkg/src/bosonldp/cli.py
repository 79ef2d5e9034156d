"""Command line entry point: ``bosonldp <subcommand> CONFIG [--out DIR] [--set k=v]``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import load
from .errors import BosonLDPError, ConfigError, DependencyError
from .experiment import COMMANDS
from .selftest import FAULTS, self_test

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("bosonldp")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bosonldp", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="INI config file")
        p.add_argument("--out", help="output directory (overrides [output] directory)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value; repeatable")
    p = sub.add_parser("self-test")
    p.add_argument("--inject-fault", action="append", default=[], choices=FAULTS, help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)

    if args.command == "self-test":
        report = self_test(inject=args.inject_fault)
        for line in report.lines():
            print(line)
        return EXIT_OK if report.passed else EXIT_INVARIANT

    try:
        config = load(args.config, args.overrides)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    try:
        record = COMMANDS[args.command](config, out=args.out)
    except (ConfigError, DependencyError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_CONFIG
    except BosonLDPError as exc:
        log.error("invariant failure: %s: %s", type(exc).__name__, exc)
        return EXIT_INVARIANT
    for name, meta in record.tables.items():
        log.info("%s  %s", meta["sha256"][:12], meta["path"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
