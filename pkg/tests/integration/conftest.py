"""
Integration fixtures: a sample sink, a seeded registry, a gateway on loopback
ports and a fleet of simulated sensors, all in this process.
"""
import asyncio
import time
from dataclasses import dataclass, field
from typing import Callable, List

import httpx
import pytest

from core.config import ContextConfig, FleetConfig, GatewayConfig, ListenerBinding, RegistryConfig
from core.gateway import Gateway, SessionOutcome
from core.registry import RegistryService
from core.registry.api import create_app
from core.simsensor import SampleSink, SimulatedSensor, find_model
from core.simsensor.fleet import Fleet, spec_from_model
from core.wire import TransportKind
from tests.support import REGISTRY_URL

# Fixed context so strategies do not depend on the wall clock
WINTER_NIGHT = ContextConfig(season="winter", time_band="night")


async def eventually(predicate: Callable[[], bool], timeout: float = 10.0, poll_s: float = 0.02) -> bool:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        await asyncio.sleep(poll_s)
    return predicate()


@dataclass
class Stack:
    service: RegistryService
    sink: SampleSink
    gateway: Gateway
    fleet: Fleet
    uids: List[str] = field(default_factory=list)

    def add(self, model: str, transport: TransportKind = TransportKind.TCP, uid: str = "") -> SimulatedSensor:
        uid = uid or f"{len(self.uids) + 1:016x}"
        self.uids.append(uid)
        return self.fleet.add(spec_from_model(find_model(model), uid, transport))

    def outcomes(self, outcome: SessionOutcome) -> int:
        return self.gateway.counts[outcome]

    async def close(self) -> None:
        await self.fleet.stop()
        await self.gateway.stop()
        await self.sink.stop()


@pytest.fixture
async def make_stack(tmp_path):
    """Factory for a full in-process deployment; everything is torn down after the test."""
    stacks: List[Stack] = []

    async def build(max_sessions: int = 20, zero_latency: bool = True, phase_timeout_s: float = 10.0) -> Stack:
        sink = await SampleSink().start()
        service = RegistryService(RegistryConfig(store_dir=tmp_path / f"registry-{len(stacks)}",
                                                 sink_host=sink.address[0], sink_port=sink.address[1]))
        service.seed()
        transport = httpx.ASGITransport(app=create_app(service))

        config = GatewayConfig(
            listeners=[ListenerBinding(kind=kind, port=0) for kind in TransportKind],
            registry_url=REGISTRY_URL,
            max_sessions=max_sessions,
            phase_timeout_s=phase_timeout_s,
            registry_backoff_s=0.0,
            context=WINTER_NIGHT,
        )
        gateway = Gateway(config, http_transport=transport, zero_latency=zero_latency)
        await gateway.start()
        ports = {TransportKind(kind): address[1] for kind, address in gateway.addresses.items()}
        fleet = Fleet(FleetConfig(gateway_ports=ports, registry_url=REGISTRY_URL, connect_retry_s=0.05), transport)

        stack = Stack(service=service, sink=sink, gateway=gateway, fleet=fleet)
        stacks.append(stack)
        return stack

    yield build
    for stack in stacks:
        await stack.close()
