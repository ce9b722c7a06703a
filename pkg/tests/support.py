"""
Test helpers: in-memory session pairs and builders for sensors, profiles and strategies.
"""
import asyncio
from typing import Optional, Tuple

from core.models import (
    Capability,
    Credentials,
    SamplingRange,
    SensingStrategy,
    SensorIdentity,
    SensorProfile,
)
from core.simsensor import SimulatedSensor, find_model
from core.simsensor.fleet import spec_from_model
from core.wire import ConnectionClosed, Session, TransportKind, TransportProfile

# Base address for the in-process registry
REGISTRY_URL = "http://registry.test"
UID = "a1b2c3d4e5f60708"


class PipeSession(Session):
    """One end of an in-memory, zero-latency session pair."""

    def __init__(self, name: str):
        super().__init__((name, 0), TransportProfile.for_kind(TransportKind.TCP), inject_latency=False)
        self.inbox: "asyncio.Queue[Optional[bytes]]" = asyncio.Queue()
        self.other: Optional["PipeSession"] = None

    async def _write(self, frame: bytes) -> None:
        if self.other is None or self.other.closed:
            self.closed = True
            raise ConnectionClosed(f"{self.peer_label} peer is gone")
        self.other.inbox.put_nowait(frame)

    async def _read_frame(self) -> bytes:
        frame = await self.inbox.get()
        if frame is None:
            self.closed = True
            raise ConnectionClosed(f"{self.peer_label} closed")
        return frame

    async def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        if self.other is not None:
            self.other.inbox.put_nowait(None)


def session_pair() -> Tuple[PipeSession, PipeSession]:
    """(gateway side, sensor side)"""
    gateway, sensor = PipeSession("gateway"), PipeSession("sensor")
    gateway.other, sensor.other = sensor, gateway
    return gateway, sensor


def make_sensor(model: str, uid: str = UID, booted: bool = True,
                registry_url: str = REGISTRY_URL, http_transport=None) -> SimulatedSensor:
    spec = spec_from_model(find_model(model), uid)
    sensor = SimulatedSensor(spec, registry_url, http_transport)
    if booted:
        sensor.boot(0)
    return sensor


def make_profile(phenomena=("temperature",), smin: float = 1, smax: float = 3600, schedules: bool = True,
                 uid: str = UID, model: str = "WaspTemp3") -> SensorProfile:
    return SensorProfile(
        identity=SensorIdentity(uid=uid, model=model, manufacturer="libelium"),
        capabilities=[Capability(phenomenon=p, unit="u") for p in phenomena],
        sampling_range=SamplingRange(min_s=smin, max_s=smax),
        supports_schedules=schedules,
        transports=["tcp"],
    )


def make_strategy(sampling: float = 10, commfreq: float = 60, token: str = "0" * 32) -> SensingStrategy:
    return SensingStrategy(sampling_s=sampling, commfreq_s=commfreq,
                           credentials=Credentials(host="127.0.0.1", port=7900, token=token))
