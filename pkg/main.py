#!/usr/bin/env python3
import argparse
import logging
import sys

# Ensure core is imported to install the TRACE level and log format
import core
from core.cli import EXIT_UNEXPECTED, configure_logging
from core.cli.commands.bench import add_bench_command, handle_bench_command
from core.cli.commands.fleet import add_fleet_command, handle_fleet_command
from core.cli.commands.gateway import add_gateway_command, handle_gateway_command
from core.cli.commands.registry import add_registry_command, handle_registry_command

logger = logging.getLogger("caddot")

HANDLERS = {
    "registry": handle_registry_command,
    "gateway": handle_gateway_command,
    "fleet": handle_fleet_command,
    "bench": handle_bench_command,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description=f"CADDOT sensor discovery and configuration (v{core.__version__})")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--debug", action="store_true", help="Debug logging")
    verbosity.add_argument("--trace", action="store_true", help="Log every frame on the wire")
    verbosity.add_argument("--quiet", action="store_true", help="Warnings and errors only")
    subparsers = parser.add_subparsers(dest="command", required=True)

    add_registry_command(subparsers)
    add_gateway_command(subparsers)
    add_fleet_command(subparsers)
    add_bench_command(subparsers)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(debug=args.debug, trace=args.trace, quiet=args.quiet)
    try:
        return HANDLERS[args.command](args)
    except Exception as e:
        logger.exception(f"Unexpected failure in {args.command}: {e}")
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
