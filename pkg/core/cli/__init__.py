"""
Command-line entry points. Every handler returns a process exit code.
"""
import logging

from core import TRACE

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_BAD_CONFIG = 2
EXIT_REGISTRY_UNREACHABLE = 3
EXIT_THRESHOLD_VIOLATION = 4


def add_common_arguments(parser) -> None:
    """Flags shared by every subcommand."""
    parser.add_argument("--config", help="Settings YAML file (defaults apply when omitted)")


def configure_logging(debug: bool = False, trace: bool = False, quiet: bool = False) -> None:
    if trace:
        level = TRACE
    elif debug:
        level = logging.DEBUG
    elif quiet:
        level = logging.WARNING
    else:
        return
    logging.getLogger().setLevel(level)
