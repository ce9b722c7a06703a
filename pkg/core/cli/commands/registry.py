"""
CLI commands for the registry: serve the HTTP API or seed the store.
"""
import asyncio
import logging

import click
import uvicorn

from core.cli import EXIT_BAD_CONFIG, EXIT_OK, add_common_arguments
from core.config import ConfigError, RegistryConfig, load_config
from core.registry import RegistryService, RuleTableError
from core.registry.api import create_app
from core.schemas import SchemaError
from core.simsensor import SampleSink
from core.wire import BindError

logger = logging.getLogger(__name__)


def add_registry_command(subparsers):
    """Add registry command to the CLI."""
    parser = subparsers.add_parser("registry", help="Run or seed the sensor registry")
    sub = parser.add_subparsers(dest="registry_command", required=True)

    serve_parser = sub.add_parser("serve", help="Serve the registry API")
    add_common_arguments(serve_parser)
    serve_parser.add_argument("--seed", action="store_true", help="Publish the shipped catalog before serving")
    serve_parser.add_argument("--port", type=int, help="Override the configured port")

    seed_parser = sub.add_parser("seed", help="Publish the shipped catalog and plugins into the store")
    add_common_arguments(seed_parser)


def handle_registry_command(args) -> int:
    """Handle registry command."""
    try:
        config = load_config(RegistryConfig, args.config)
        if getattr(args, "port", None) is not None:
            config = config.model_copy(update={"port": args.port})
        service = RegistryService(config)
    except (ConfigError, RuleTableError, SchemaError) as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_BAD_CONFIG

    if args.registry_command == "seed" or getattr(args, "seed", False):
        count = service.seed()
        click.echo(f"Seeded {count} models into {config.store_dir}")
        if args.registry_command == "seed":
            return EXIT_OK

    click.echo(f"Registry serving on http://{config.host}:{config.port} (store: {config.store_dir}); "
               f"samples on {config.sink_host}:{config.sink_port}")
    try:
        asyncio.run(serve(service, config))
    except BindError as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_BAD_CONFIG
    except KeyboardInterrupt:
        pass
    click.echo("Registry stopped")
    return EXIT_OK


async def serve(service: RegistryService, config: RegistryConfig) -> None:
    """The registry API plus the sample sink named in the credentials it issues."""
    sink = await SampleSink().start(config.sink_host, config.sink_port)
    try:
        server = uvicorn.Server(uvicorn.Config(create_app(service), host=config.host, port=config.port,
                                               log_level="warning"))
        # Every mutation is written through to the store, so shutdown has nothing left to persist
        await server.serve()
    finally:
        await sink.stop()
