"""
Fleets of simulated sensors: building specs, spawning, churn and the test hook.
"""
import json
import math
import random
import asyncio
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import httpx
from fastapi import FastAPI, HTTPException
from pydantic import ValidationError as PydanticValidationError

from core.config import FleetConfig
from core.schemas import validate_document
from core.simsensor.catalog import SHIPPED_MODELS, CatalogModel
from core.simsensor.sensor import Lifecycle, SensorSpec, SimSensorError, SimulatedSensor, at_least
from core.wire import TransportKind

logger = logging.getLogger(__name__)


class SpawnError(SimSensorError):
    """One sensor of a fleet could not be started; the others continue."""

    def __init__(self, uid: str, reason: str):
        super().__init__(f"sensor {uid}: {reason}")
        self.uid = uid
        self.reason = reason


def spec_from_model(model: CatalogModel, uid: str, transport: TransportKind = TransportKind.TCP,
                    boot_delay_s: float = 0.0) -> SensorSpec:
    return SensorSpec(
        uid=uid,
        model=model.model,
        manufacturer=model.manufacturer,
        dialect=model.dialect,
        transport=transport,
        boot_delay_s=boot_delay_s,
        capabilities=model.capabilities,
        sampling_range=model.sampling_range,
        supports_schedules=model.supports_schedules,
        transports=model.transports,
        epc=model.epc_for(uid),
    )


def build_fleet_specs(count: int = 52, seed: int = 7,
                      transports: Sequence[TransportKind] = (TransportKind.TCP,),
                      boot_band: Tuple[float, float] = (0.0, 0.0),
                      models: Optional[Sequence[CatalogModel]] = None) -> List[SensorSpec]:
    """
    Build a fleet cycling through the catalog, one model per sensor.

    Boot delays are drawn uniformly from ``boot_band``; transports rotate.
    The same seed gives the same fleet.
    """
    rng = random.Random(seed)
    models = list(models or SHIPPED_MODELS)
    low, high = boot_band
    specs = []
    for index in range(count):
        uid = f"{rng.getrandbits(64):016x}"
        delay = rng.uniform(low, high) if high > 0 else 0.0
        specs.append(spec_from_model(models[index % len(models)], uid,
                                     transports[index % len(transports)], round(delay, 3)))
    return specs


def load_fleet_spec(path: Path) -> List[SensorSpec]:
    """
    Read a fleet spec file (JSON list of sensor specs).

    Entries may name a shipped model and omit the fields it supplies.

    Raises:
        SchemaValidationError: If the file does not satisfy the fleet schema
        SimSensorError: If an entry is not a valid sensor
    """
    with open(path, "r", encoding="utf-8") as f:
        entries = json.load(f)
    validate_document(entries, "fleet_spec.yaml", str(path))

    by_name = {(m.model, m.manufacturer): m for m in SHIPPED_MODELS}
    specs = []
    for entry in entries:
        base = by_name.get((entry["model"], entry["manufacturer"]))
        data = spec_from_model(base, entry["uid"]).to_dict() if base else {}
        data.update(entry)
        try:
            specs.append(SensorSpec.from_dict(data))
        except PydanticValidationError as e:
            raise SimSensorError(f"{path}: sensor {entry['uid']}: {e.errors()[0]['msg']}")
    return specs


def dump_fleet_spec(specs: Sequence[SensorSpec], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump([spec.to_dict() for spec in specs], f, indent=2)


class Fleet:
    """Handle on running sensors."""

    def __init__(self, config: FleetConfig, http_transport: Optional[httpx.AsyncBaseTransport] = None):
        self.config = config
        self.sensors: Dict[str, SimulatedSensor] = {}
        self.failed: List[SpawnError] = []
        self._http_transport = http_transport
        self._tasks: Dict[str, asyncio.Task] = {}
        self._churn_task: Optional[asyncio.Task] = None
        self.disconnects = 0

    def gateway_address(self, kind: TransportKind) -> Tuple[str, int]:
        return (self.config.gateway_host, self.config.gateway_ports[kind])

    def add(self, spec: SensorSpec) -> SimulatedSensor:
        """
        Start one sensor.

        Raises:
            SpawnError: If its dialect cannot be rendered or its uid is taken
        """
        if spec.uid in self.sensors:
            raise SpawnError(spec.uid, "uid already in the fleet")
        if spec.transport not in self.config.gateway_ports:
            raise SpawnError(spec.uid, f"no gateway port for {spec.transport.value}")
        try:
            spec.descriptor()
        except Exception as e:
            raise SpawnError(spec.uid, f"dialect {spec.dialect} unusable: {e}")

        sensor = SimulatedSensor(spec, self.config.registry_url, self._http_transport)
        task = asyncio.ensure_future(sensor.run(self.gateway_address(spec.transport), self.config.connect_retry_s))
        task.add_done_callback(lambda t, uid=spec.uid: self._finished(uid, t))
        self.sensors[spec.uid] = sensor
        self._tasks[spec.uid] = task
        return sensor

    def _finished(self, uid: str, task: asyncio.Task) -> None:
        if task.cancelled():
            return
        error = task.exception()
        if error is not None:
            logger.error(f"Sensor {uid} stopped: {error}")
            self.failed.append(SpawnError(uid, str(error)))

    def churn(self, rate: float, rng: Optional[random.Random] = None) -> List[str]:
        """Disconnect and reconnect ceil(rate x N) random sensors."""
        rng = rng or random.Random()
        uids = sorted(self.sensors)
        count = min(len(uids), math.ceil(rate * len(uids)))
        chosen = rng.sample(uids, count)
        for uid in chosen:
            self.sensors[uid].disconnect()
        self.disconnects += len(chosen)
        logger.info(f"Churn: {len(chosen)} of {len(uids)} sensors reconnecting")
        return chosen

    def start_churn(self, rate: float, seed: int = 7) -> None:
        rng = random.Random(seed)

        async def loop() -> None:
            while True:
                await asyncio.sleep(self.config.churn_period_s)
                self.churn(rate, rng)

        self._churn_task = asyncio.ensure_future(loop())

    async def stop(self) -> None:
        if self._churn_task is not None:
            self._churn_task.cancel()
        for task in self._tasks.values():
            task.cancel()
        await asyncio.gather(*self._tasks.values(), *(t for t in [self._churn_task] if t), return_exceptions=True)
        self._tasks.clear()

    def snapshot(self) -> List[Dict]:
        return [self.snapshot_one(uid) for uid in sorted(self.sensors)]

    def snapshot_one(self, uid: str) -> Dict:
        sensor = self.sensors[uid]
        return {
            "uid": uid,
            "model": sensor.spec.model,
            "dialect": sensor.spec.dialect,
            "transport": sensor.spec.transport.value,
            **sensor.state.model_dump(mode="json"),
        }

    async def wait_until(self, lifecycle: Lifecycle, uids: Optional[Sequence[str]] = None, timeout: float = 30.0,
                         poll_s: float = 0.05) -> bool:
        """Wait until the given (or all) sensors reached ``lifecycle`` or beyond."""
        wanted = list(uids or self.sensors)

        async def poll() -> None:
            while not all(at_least(self.sensors[uid].state.lifecycle, lifecycle) for uid in wanted):
                await asyncio.sleep(poll_s)

        try:
            await asyncio.wait_for(poll(), timeout)
            return True
        except asyncio.TimeoutError:
            return False


async def spawn_fleet(specs: Sequence[SensorSpec], config: FleetConfig,
                      http_transport: Optional[httpx.AsyncBaseTransport] = None) -> Fleet:
    """
    Launch every sensor; a sensor that fails to start is reported and the rest continue.
    """
    fleet = Fleet(config, http_transport)
    for spec in specs:
        try:
            fleet.add(spec)
        except SpawnError as e:
            logger.error(str(e))
            fleet.failed.append(e)
    logger.info(f"Spawned {len(fleet.sensors)} sensors ({len(fleet.failed)} failed)")
    return fleet


def create_hook_app(fleet: Fleet) -> FastAPI:
    """Read-only state endpoint for configuration-fidelity checks."""
    app = FastAPI(title="caddot fleet hook")

    @app.get("/sensors")
    async def list_sensors() -> List[Dict]:
        return fleet.snapshot()

    @app.get("/sensors/{uid}")
    async def get_sensor(uid: str) -> Dict:
        if uid not in fleet.sensors:
            raise HTTPException(status_code=404, detail=f"no sensor {uid}")
        return fleet.snapshot_one(uid)

    return app
