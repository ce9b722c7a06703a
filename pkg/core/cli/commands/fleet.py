"""
CLI command that spawns a fleet of simulated sensors.
"""
import asyncio
import logging
from pathlib import Path
from typing import List, Optional, Tuple

import click
import uvicorn

from core.cli import EXIT_BAD_CONFIG, EXIT_OK, add_common_arguments
from core.config import ConfigError, FleetConfig, load_config
from core.schemas import SchemaError
from core.simsensor import SimSensorError, build_fleet_specs, create_hook_app, load_fleet_spec, spawn_fleet
from core.simsensor.sensor import SensorSpec
from core.wire import TransportKind

logger = logging.getLogger(__name__)

MIXED = "mixed"


def parse_band(text: str) -> Tuple[float, float]:
    """'5,15' -> (5.0, 15.0)"""
    low, _, high = text.partition(",")
    band = (float(low), float(high or low))
    if band[0] < 0 or band[0] > band[1]:
        raise ValueError(f"boot band must be low,high with 0 <= low <= high, got {text!r}")
    return band


def parse_transports(text: str) -> List[TransportKind]:
    if text == MIXED:
        return list(TransportKind)
    return [TransportKind(item.strip()) for item in text.split(",") if item.strip()]


def add_fleet_command(subparsers):
    """Add fleet command to the CLI."""
    parser = subparsers.add_parser("fleet", help="Spawn simulated sensors against a gateway")
    add_common_arguments(parser)
    parser.add_argument("--spec", help="Fleet spec JSON file")
    parser.add_argument("--count", type=int, default=52, help="Sensors to build when no spec is given")
    parser.add_argument("--seed", type=int, default=7, help="Seed for uids, boot delays and churn")
    parser.add_argument("--boot-delay", type=float, help="Fixed boot delay in seconds for every sensor")
    parser.add_argument("--boot-band", help="Uniform boot delay band in seconds, as low,high")
    parser.add_argument("--churn", type=float, default=0.0, help="Fraction of sensors reconnecting per period")
    parser.add_argument("--transport", help="tcp, udp, bt-sim, a comma list, or 'mixed'")
    parser.add_argument("--hook-port", type=int, help="Port of the sensor state endpoint")


def build_specs(args) -> List[SensorSpec]:
    """
    Raises:
        SchemaError, SimSensorError, ValueError, OSError: Unusable arguments or spec file
    """
    transports: Optional[List[TransportKind]] = parse_transports(args.transport) if args.transport else None
    if args.spec:
        specs = load_fleet_spec(Path(args.spec))
        if transports:
            specs = [spec.model_copy(update={"transport": transports[i % len(transports)]})
                     for i, spec in enumerate(specs)]
    else:
        band = parse_band(args.boot_band) if args.boot_band else (0.0, 0.0)
        specs = build_fleet_specs(count=args.count, seed=args.seed,
                                  transports=transports or [TransportKind.TCP], boot_band=band)
    if args.boot_delay is not None:
        specs = [spec.model_copy(update={"boot_delay_s": args.boot_delay}) for spec in specs]
    return specs


async def _run_fleet(config: FleetConfig, specs: List[SensorSpec], churn: float, seed: int) -> None:
    fleet = await spawn_fleet(specs, config)
    if churn > 0:
        fleet.start_churn(churn, seed)
    server = uvicorn.Server(uvicorn.Config(create_hook_app(fleet), host=config.hook_host,
                                           port=config.hook_port, log_level="warning"))
    try:
        await server.serve()
    finally:
        await fleet.stop()
        logger.info(f"Fleet stopped after {fleet.disconnects} churn disconnects")


def handle_fleet_command(args) -> int:
    """Handle fleet command."""
    try:
        config = load_config(FleetConfig, args.config)
        if args.hook_port is not None:
            config = config.model_copy(update={"hook_port": args.hook_port})
        specs = build_specs(args)
    except (ConfigError, SchemaError, SimSensorError, ValueError, OSError) as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_BAD_CONFIG

    click.echo(f"Spawning {len(specs)} sensors against {config.gateway_host}; "
               f"hook on http://{config.hook_host}:{config.hook_port}")
    try:
        asyncio.run(_run_fleet(config, specs, args.churn, args.seed))
    except KeyboardInterrupt:
        pass
    return EXIT_OK
