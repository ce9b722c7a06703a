"""
CLI command for the gateway daemon.
"""
import asyncio
import logging

import click

from core.cli import EXIT_BAD_CONFIG, EXIT_OK, EXIT_REGISTRY_UNREACHABLE, add_common_arguments
from core.config import ConfigError, GatewayConfig, load_config
from core.gateway import Gateway, RegistryUnreachable
from core.wire import BindError

logger = logging.getLogger(__name__)


def add_gateway_command(subparsers):
    """Add gateway command to the CLI."""
    parser = subparsers.add_parser("gateway", help="Run the discovery gateway")
    add_common_arguments(parser)
    parser.add_argument("--max-sessions", type=int, help="Maximum concurrent discovery sessions")
    parser.add_argument("--registry", help="Registry base address (overrides config and CADDOT_REGISTRY)")


def handle_gateway_command(args) -> int:
    """Handle gateway command."""
    try:
        config = load_config(GatewayConfig, args.config)
        update = {}
        if args.max_sessions is not None:
            update["max_sessions"] = args.max_sessions
        if args.registry:
            update["registry_url"] = args.registry
        if update:
            config = GatewayConfig.model_validate({**config.model_dump(), **update})
    except (ConfigError, ValueError) as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_BAD_CONFIG

    bindings = ", ".join(f"{b.kind.value}://{b.host}:{b.port}" for b in config.listeners)
    click.echo(f"Gateway on {bindings}; registry {config.registry_url}; "
               f"status http://{config.status_host}:{config.status_port}")
    try:
        asyncio.run(Gateway(config).run())
    except RegistryUnreachable as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_REGISTRY_UNREACHABLE
    except BindError as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_BAD_CONFIG
    except KeyboardInterrupt:
        pass
    click.echo("Gateway stopped")
    return EXIT_OK
