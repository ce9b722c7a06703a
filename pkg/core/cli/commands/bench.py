"""
CLI command that benchmarks sensor configuration per transport.

Runs are sequential within a transport so each one measures an uncontended
configuration; results are reported per step and checked against thresholds.
"""
import asyncio
import logging
import tempfile
import time
from pathlib import Path
from typing import Awaitable, Callable, Dict, List, Optional, Tuple

import click
import httpx
from pydantic import Field

from core.cli import (
    EXIT_BAD_CONFIG,
    EXIT_OK,
    EXIT_REGISTRY_UNREACHABLE,
    EXIT_THRESHOLD_VIOLATION,
    EXIT_UNEXPECTED,
    add_common_arguments,
)
from core.cli.commands.fleet import parse_band, parse_transports
from core.config import (
    BenchConfig,
    ConfigError,
    FleetConfig,
    GatewayConfig,
    ListenerBinding,
    RegistryConfig,
    Thresholds,
    load_config,
)
from core.gateway import Gateway, RegistryClient, RegistryUnreachable, SessionRecord
from core.gateway.report import TimingReport, render_table, report_timings, to_csv
from core.models import Record
from core.registry import RegistryService
from core.registry.api import create_app
from core.simsensor import Fleet, SampleSink, build_fleet_specs

logger = logging.getLogger(__name__)

# Base address used for the in-process registry; requests never leave the process
IN_PROCESS_REGISTRY = "http://registry.local"

RecordSource = Callable[[], Awaitable[List[SessionRecord]]]


class BenchError(Exception):
    """The bench could not talk to the services it measures."""
    pass


class BenchReport(Record):
    timing: TimingReport
    requested: Dict[str, int] = Field(default_factory=dict)
    completed: Dict[str, int] = Field(default_factory=dict)
    violations: List[str] = Field(default_factory=list)
    elapsed_s: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.violations


def check_thresholds(report: TimingReport, thresholds: Thresholds, boot_checked: bool) -> List[str]:
    """Steps (4)-(9) means, per-run steps (2)-(10) totals and, when boots were simulated, the boot band."""
    violations = []
    for row in report.rows:
        if 4 <= row.step <= 9 and row.mean_ms >= thresholds.step_mean_max_ms:
            violations.append(f"{row.transport}: step ({row.step}) {row.name} mean {row.mean_ms:.1f} ms "
                              f">= {thresholds.step_mean_max_ms:g} ms")
    for transport, totals in report.end_to_end_ms.items():
        for run, total in enumerate(totals, start=1):
            if total >= thresholds.end_to_end_max_ms:
                violations.append(f"{transport}: run {run} took {total:.1f} ms "
                                  f">= {thresholds.end_to_end_max_ms:g} ms")
    if boot_checked:
        for transport, values in report.setup_ms.items():
            for run, value in enumerate(values, start=1):
                if not thresholds.boot_min_ms <= value <= thresholds.boot_max_ms:
                    violations.append(f"{transport}: run {run} boot {value:.0f} ms outside "
                                      f"[{thresholds.boot_min_ms:g}, {thresholds.boot_max_ms:g}] ms")
    return violations


async def _await_record(source: RecordSource, uid: str, baseline: int, timeout: float,
                        poll_s: float = 0.05) -> Optional[SessionRecord]:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        for record in (await source())[baseline:]:
            if record.uid == uid:
                return record
        await asyncio.sleep(poll_s)
    return None


async def collect_runs(config: BenchConfig, fleet_config: FleetConfig, source: RecordSource,
                       http_transport: Optional[httpx.AsyncBaseTransport] = None
                       ) -> Tuple[List[SessionRecord], Dict[str, int]]:
    """Configure ``config.runs`` fresh sensors per transport, one at a time."""
    records: List[SessionRecord] = []
    completed: Dict[str, int] = {}
    for position, kind in enumerate(config.transports):
        specs = build_fleet_specs(count=config.runs, seed=config.seed + position, transports=[kind],
                                  boot_band=config.boot_band_s)
        fleet = Fleet(fleet_config, http_transport)
        done = 0
        try:
            for spec in specs:
                baseline = len(await source())
                fleet.add(spec)
                record = await _await_record(source, spec.uid, baseline,
                                             config.run_timeout_s + spec.boot_delay_s)
                if record is None:
                    logger.warning(f"{kind.value} run for {spec.model} ({spec.uid}) did not complete")
                    continue
                records.append(record)
                done += 1
        finally:
            await fleet.stop()
        completed[kind.value] = done
        logger.info(f"{kind.value}: {done}/{config.runs} runs completed")
    return records, completed


async def run_standalone(config: BenchConfig) -> Tuple[List[SessionRecord], Dict[str, int]]:
    """Host the registry, a sample sink and the gateway in this process."""
    with tempfile.TemporaryDirectory(prefix="caddot-bench-") as store_dir:
        sink = await SampleSink().start()
        gateway = None
        try:
            service = RegistryService(RegistryConfig(store_dir=Path(store_dir), sink_host=sink.address[0],
                                                     sink_port=sink.address[1]))
            service.seed()
            transport = httpx.ASGITransport(app=create_app(service))

            gateway_config = GatewayConfig(
                listeners=[ListenerBinding(kind=kind, port=0) for kind in config.transports],
                registry_url=IN_PROCESS_REGISTRY,
            )
            gateway = Gateway(gateway_config, http_transport=transport)
            await gateway.start()
            ports = {listener.profile.kind: listener.address[1] for listener in gateway.listeners}
            fleet_config = config.fleet.model_copy(update={"gateway_host": "127.0.0.1", "gateway_ports": ports,
                                                           "registry_url": IN_PROCESS_REGISTRY})

            async def source() -> List[SessionRecord]:
                return gateway.session_records()

            return await collect_runs(config, fleet_config, source, transport)
        finally:
            if gateway is not None:
                await gateway.stop()
            await sink.stop()


async def run_remote(config: BenchConfig) -> Tuple[List[SessionRecord], Dict[str, int]]:
    """
    Drive a running registry and gateway.

    Raises:
        RegistryUnreachable: Registry not answering
        BenchError: Gateway status endpoint not answering
    """
    client = RegistryClient(config.registry_url)
    try:
        await client.ping()
    finally:
        await client.close()

    async with httpx.AsyncClient(base_url=config.gateway_status_url, timeout=5.0) as status:
        async def source() -> List[SessionRecord]:
            try:
                response = await status.get("/sessions")
                response.raise_for_status()
            except httpx.HTTPError as e:
                raise BenchError(f"gateway status at {config.gateway_status_url} unavailable: {e}")
            return [SessionRecord.from_dict(item) for item in response.json()]

        await source()
        return await collect_runs(config, config.fleet, source)


async def run_bench(config: BenchConfig, standalone: bool) -> BenchReport:
    started = time.monotonic()
    if config.runs == 0:
        records, completed = [], {kind.value: 0 for kind in config.transports}
    elif standalone:
        records, completed = await run_standalone(config)
    else:
        records, completed = await run_remote(config)

    timing = report_timings(records)
    violations = check_thresholds(timing, config.thresholds, boot_checked=config.boot_band_s[1] > 0)
    for transport, done in completed.items():
        if done < config.runs:
            violations.append(f"{transport}: only {done} of {config.runs} runs completed")
    return BenchReport(timing=timing, requested={kind.value: config.runs for kind in config.transports},
                       completed=completed, violations=violations, elapsed_s=time.monotonic() - started)


def add_bench_command(subparsers):
    """Add bench command to the CLI."""
    parser = subparsers.add_parser("bench", help="Measure per-step configuration timings")
    add_common_arguments(parser)
    parser.add_argument("--runs", type=int, help="Configurations per transport")
    parser.add_argument("--transports", help="Comma list of tcp, udp, bt-sim (or 'mixed')")
    parser.add_argument("--seed", type=int, help="Seed for the generated sensors")
    parser.add_argument("--boot-band", help="Uniform boot delay band in seconds, as low,high")
    parser.add_argument("--csv", help="Write the per-step CSV here")
    parser.add_argument("--standalone", action="store_true", help="Host registry and gateway in-process")
    parser.add_argument("--thresholds", help="Thresholds YAML file")


def load_bench_config(args) -> BenchConfig:
    """
    Raises:
        ConfigError, ValueError: Unusable settings or flags
    """
    config = load_config(BenchConfig, args.config)
    update = {}
    if args.runs is not None:
        update["runs"] = args.runs
    if args.transports:
        update["transports"] = parse_transports(args.transports)
    if args.seed is not None:
        update["seed"] = args.seed
    if args.boot_band:
        update["boot_band_s"] = parse_band(args.boot_band)
    if args.thresholds:
        update["thresholds"] = load_config(Thresholds, Path(args.thresholds))
    if update:
        config = BenchConfig.model_validate({**config.model_dump(), **update})
    return config


def handle_bench_command(args) -> int:
    """Handle bench command."""
    try:
        config = load_bench_config(args)
    except (ConfigError, ValueError) as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_BAD_CONFIG

    try:
        report = asyncio.run(run_bench(config, args.standalone))
    except RegistryUnreachable as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_REGISTRY_UNREACHABLE
    except BenchError as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_UNEXPECTED

    click.echo(render_table(report.timing))
    csv_text = to_csv(report.timing)
    if args.csv:
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        Path(args.csv).write_text(csv_text, encoding="utf-8")
        click.echo(f"CSV written to {args.csv}")
    else:
        click.echo(csv_text, nl=False)

    click.echo(f"Bench finished in {report.elapsed_s:.1f} s")
    if not report.passed:
        for violation in report.violations:
            click.echo(f"FAIL {violation}", err=True)
        return EXIT_THRESHOLD_VIOLATION
    click.echo("All thresholds met")
    return EXIT_OK
