"""
Simulated sensors.

A sensor answers WHO with IAM in every dialect. Everything else it speaks is
the mirror image of its model's plugin descriptor: an inbound frame is matched
against each step's send template and answered from the step's expect template.
"""
import re
import asyncio
import logging
import random
import secrets
import time
from enum import Enum
from typing import Dict, List, Optional, Tuple

import httpx
from pydantic import BaseModel, Field, field_validator

from core.models import (
    ALWAYS_ON,
    CONFIG_FIELDS,
    AcquisitionFrequency,
    AcquisitionResponsibility,
    Capability,
    Credentials,
    Record,
    SamplingRange,
    SensorIdentity,
    SensorMode,
    ValueType,
    format_seconds,
    parse_schedule,
)
from core.plugin.descriptor import (
    CANONICAL_ORDER,
    PLACEHOLDER,
    WILDCARD,
    CanonicalOp,
    PluginDescriptor,
    SequenceStep,
    whole_placeholder,
)
from core.plugin.generator import dialect_descriptor, shipped_dialects
from core.wire import ConnectionClosed, DecodeError, Message, Session, Timeout, TransportKind, TransportProfile
from core.wire.transport import DETACH, Address, open_connection

logger = logging.getLogger(__name__)

FIRMWARE = "2.1"
IDLE_TIMEOUT_S = 5.0
CONNECT_RETRY_S = 2.0
TOKEN_PATTERN = re.compile(r"^[0-9a-f]{32}$")

ERR = "ERR"


class SimSensorError(Exception):
    """Base exception for simulated sensor errors."""
    pass


class Lifecycle(str, Enum):
    BOOTING = "booting"
    DISCOVERABLE = "discoverable"
    CONFIGURED = "configured"
    REPORTING = "reporting"


_RANK = {state: rank for rank, state in enumerate(Lifecycle)}


def at_least(current: Lifecycle, target: Lifecycle) -> bool:
    return _RANK[current] >= _RANK[target]


class SensorSpec(Record):
    """Everything needed to run one simulated sensor."""
    uid: str
    model: str = Field(min_length=1)
    manufacturer: str = Field(min_length=1)
    dialect: str
    transport: TransportKind = TransportKind.TCP
    boot_delay_s: float = Field(default=0.0, ge=0)
    capabilities: List[Capability] = Field(min_length=1)
    sampling_range: SamplingRange
    supports_schedules: bool = True
    transports: List[str] = Field(default_factory=lambda: ["tcp", "udp", "bt-sim"])
    epc: Optional[str] = None

    @field_validator("dialect")
    @classmethod
    def _shipped(cls, value: str) -> str:
        if value not in shipped_dialects():
            raise ValueError(f"dialect {value!r} is not shipped")
        return value

    @property
    def identity(self) -> SensorIdentity:
        return SensorIdentity(uid=self.uid, model=self.model, manufacturer=self.manufacturer)

    @property
    def plugin_id(self) -> str:
        return f"{self.manufacturer}.{self.model.lower()}.v1"

    def descriptor(self) -> PluginDescriptor:
        return dialect_descriptor(self.plugin_id, self.model, self.manufacturer, self.dialect)


class SensorState(BaseModel):
    """Mutable state of one sensor; the fleet test hook reads snapshots of it."""
    lifecycle: Lifecycle = Lifecycle.BOOTING
    applied: Dict[str, str] = Field(default_factory=dict)
    joined_token: Optional[str] = None
    boot_ms: Optional[int] = None
    samples_sent: int = 0
    sessions: int = 0

    def advance(self, target: Lifecycle) -> None:
        """Move forward in booting -> discoverable -> configured -> reporting; never back."""
        if _RANK[target] < _RANK[self.lifecycle]:
            raise SimSensorError(f"cannot go from {self.lifecycle.value} back to {target.value}")
        self.lifecycle = target

    @property
    def credentials(self) -> Optional[Credentials]:
        try:
            return Credentials(host=self.applied["host"], port=int(self.applied["port"]),
                               token=self.applied["token"])
        except (KeyError, ValueError):
            return None


def config_value_ok(spec: SensorSpec, field: str, value: str) -> bool:
    """Whether a sensor of this spec accepts ``value`` for ``field``."""
    try:
        if field == "sampling":
            return spec.sampling_range.contains(float(value))
        if field == "commfreq":
            return float(value) > 0
        if field == "schedule":
            windows = parse_schedule(value)
            return bool(windows) and (spec.supports_schedules or value == ALWAYS_ON)
        if field == "acq_resp":
            return value in {item.value for item in AcquisitionResponsibility}
        if field == "acq_freq":
            return value in {item.value for item in AcquisitionFrequency}
        if field == "mode":
            return value in {item.value for item in SensorMode}
        if field == "host":
            return bool(value)
        if field == "port":
            return 0 < int(value) <= 65535
        if field == "token":
            return bool(TOKEN_PATTERN.match(value))
    except ValueError:
        return False
    return False


def bind_inbound(template: Message, inbound: Message) -> Optional[Dict[str, str]]:
    """
    Match an inbound frame against a send template.

    Same verb, same key set, equal literals; placeholders bind.
    Returns the bound names, or None if the frame does not fit.
    """
    if inbound.verb != template.verb or sorted(inbound.keys()) != sorted(template.keys()):
        return None
    bound: Dict[str, str] = {}
    for key, pattern in template.args:
        value = inbound.get(key)
        name = whole_placeholder(pattern)
        if name is not None:
            if bound.get(name, value) != value:
                return None
            bound[name] = value
        elif value != pattern:
            return None
    return bound


def _error(code: str, **extra: str) -> Message:
    return Message.of(ERR, code=code, **extra)


class DialectResponder:
    """Per-connection dialect state: session variables and handshake progress."""

    def __init__(self, sensor: "SimulatedSensor"):
        self.sensor = sensor
        self.memory: Dict[str, str] = {"sid": secrets.token_hex(4)}
        self.handshaken = False
        descriptor = sensor.spec.descriptor()
        self._handshake_steps = len(descriptor.script(CanonicalOp.HANDSHAKE).steps)
        self._steps: List[Tuple[CanonicalOp, int, SequenceStep]] = [
            (op, index, step)
            for op in CANONICAL_ORDER
            for index, step in enumerate(descriptor.script(op).steps, start=1)
        ]

    def _lookup(self, name: str, bound: Dict[str, str]) -> str:
        for source in (bound, self.memory, self.sensor.state.applied, self.sensor.variables()):
            if name in source:
                return source[name]
        return ""

    def _render(self, step: SequenceStep, bound: Dict[str, str]) -> Message:
        variables = self.sensor.variables()
        args: List[Tuple[str, str]] = []
        for key, pattern in step.expect.args:
            if pattern == WILDCARD:
                args.append((key, variables.get(key, "1")))
            else:
                args.append((key, PLACEHOLDER.sub(lambda m: self._lookup(m.group(1), bound), pattern)))
        present = {key for key, _ in args}
        for key in step.capture:
            if key not in present:
                args.append((key, self._lookup(key, bound)))
        return Message(verb=step.expect.verb, args=tuple(args))

    def _conflict(self, bound: Dict[str, str]) -> Optional[str]:
        """A bound name the sensor already holds with another value (session id, uid)."""
        known = {"uid": self.sensor.spec.uid, **self.memory}
        for name, value in bound.items():
            if name in known and name not in CONFIG_FIELDS and known[name] != value:
                return name
        return None

    async def respond(self, inbound: Message) -> Optional[Message]:
        """Answer one inbound frame; None means silence."""
        if self.sensor.state.lifecycle == Lifecycle.BOOTING:
            return None
        if inbound.verb == "WHO":
            return self.sensor.iam()

        for op, index, step in self._steps:
            bound = bind_inbound(step.send, inbound)
            if bound is None:
                continue
            if op != CanonicalOp.HANDSHAKE and not self.handshaken:
                return _error("denied")
            conflict = self._conflict(bound)
            if conflict:
                return _error("mismatch", field=conflict)
            for name, value in bound.items():
                if name in CONFIG_FIELDS and not self.sensor.apply_config(name, value):
                    return _error("range", field=name)
            self.memory.update({k: v for k, v in bound.items() if k not in CONFIG_FIELDS})

            if op == CanonicalOp.HANDSHAKE and index == self._handshake_steps:
                self.handshaken = True
            if op == CanonicalOp.FINALIZE and not await self.sensor.join_secure():
                return _error("refused")
            return self._render(step, bound)

        return _error("unknown")


class SimulatedSensor:
    """
    One virtual device: boots, connects to the gateway and answers in its dialect.
    Runs as an independent sequential actor.
    """

    def __init__(self, spec: SensorSpec, registry_url: str,
                 http_transport: Optional[httpx.AsyncBaseTransport] = None):
        self.spec = spec
        self.registry_url = registry_url
        self.state = SensorState()
        self._http_transport = http_transport
        self._session: Optional[Session] = None
        self._reconnect = asyncio.Event()
        self._rng = random.Random(spec.uid)

    def variables(self) -> Dict[str, str]:
        spec = self.spec
        return {
            "uid": spec.uid,
            "model": spec.model,
            "fw": FIRMWARE,
            "caps": ",".join(cap.to_wire() for cap in spec.capabilities),
            "smin": format_seconds(spec.sampling_range.min_s),
            "smax": format_seconds(spec.sampling_range.max_s),
            "sched": "1" if spec.supports_schedules else "0",
            "transports": ",".join(spec.transports),
            "epc": spec.epc or "",
        }

    def iam(self) -> Message:
        return Message.of("IAM", uid=self.spec.uid, model=self.spec.model, mfr=self.spec.manufacturer,
                          boot_ms=self.state.boot_ms or 0)

    def boot(self, boot_ms: int) -> None:
        self.state.boot_ms = boot_ms
        self.state.advance(Lifecycle.DISCOVERABLE)

    def apply_config(self, field: str, value: str) -> bool:
        """Store an in-range value and acknowledge it, or reject it."""
        if not config_value_ok(self.spec, field, value):
            logger.info(f"Sensor {self.spec.uid} rejects {field}={value!r}")
            return False
        self.state.applied[field] = value
        if self.state.lifecycle == Lifecycle.DISCOVERABLE:
            self.state.advance(Lifecycle.CONFIGURED)
        return True

    async def join_secure(self) -> bool:
        """
        Join the secure network with the credentials received through set_network.
        A sensor already reporting with the same token acknowledges without re-joining.
        """
        credentials = self.state.credentials
        if credentials is None:
            logger.warning(f"Sensor {self.spec.uid} asked to join without credentials")
            return False
        if self.state.lifecycle == Lifecycle.REPORTING and self.state.joined_token == credentials.token:
            return True

        try:
            async with httpx.AsyncClient(base_url=self.registry_url, transport=self._http_transport,
                                         timeout=5.0) as client:
                response = await client.post("/join", json={"uid": self.spec.uid, "token": credentials.token})
                accepted = response.status_code == 200 and bool(response.json().get("accepted"))
        except httpx.HTTPError as e:
            logger.warning(f"Sensor {self.spec.uid} could not reach the registry to join: {e}")
            return False

        if not accepted:
            logger.warning(f"Sensor {self.spec.uid} was refused by the secure network")
            return False
        self.state.advance(Lifecycle.REPORTING)
        self.state.joined_token = credentials.token
        logger.info(f"Sensor {self.spec.uid} joined the secure network")
        await self.emit_sample(credentials)
        return True

    def _reading(self, capability: Capability) -> str:
        if capability.value_type == ValueType.BOOL:
            return "1"
        if capability.value_type == ValueType.INT:
            return str(self._rng.randint(0, 1000))
        if capability.value_type == ValueType.BLOB:
            return secrets.token_hex(4)
        return f"{self._rng.uniform(0, 40):.2f}"

    async def emit_sample(self, credentials: Credentials) -> None:
        """Send one sample to the data endpoint to prove the path works."""
        capability = self.spec.capabilities[0]
        sample = Message.of("SAMPLE", uid=self.spec.uid, phenomenon=capability.phenomenon,
                            value=self._reading(capability))
        profile = TransportProfile.for_kind(TransportKind.TCP)
        try:
            session = await open_connection(profile, (credentials.host, credentials.port))
        except ConnectionClosed as e:
            logger.warning(f"Sensor {self.spec.uid} could not deliver its sample: {e}")
            return
        try:
            await session.send(sample)
            self.state.samples_sent += 1
        except ConnectionClosed as e:
            logger.warning(f"Sensor {self.spec.uid} lost the data endpoint: {e}")
        finally:
            await session.close()

    async def serve(self, session: Session) -> None:
        """Answer frames on one connection until it closes."""
        responder = DialectResponder(self)
        while not session.closed:
            try:
                inbound = await session.receive(timeout=IDLE_TIMEOUT_S)
            except Timeout:
                continue
            except ConnectionClosed:
                return
            except DecodeError as e:
                logger.debug(f"Sensor {self.spec.uid} dropped a bad frame: {e}")
                continue
            if inbound.verb == DETACH:
                return
            reply = await responder.respond(inbound)
            if reply is not None:
                await session.send(reply)

    def disconnect(self) -> None:
        """Drop the current connection and reconnect (churn)."""
        self._reconnect.set()
        if self._session is not None:
            asyncio.ensure_future(self._session.close())

    async def run(self, gateway: Address, connect_retry_s: float = CONNECT_RETRY_S) -> None:
        """Boot, then keep a connection to the gateway until configured or asked to reconnect."""
        started = time.monotonic()
        if self.spec.boot_delay_s:
            await asyncio.sleep(self.spec.boot_delay_s)
        self.boot(int(round((time.monotonic() - started) * 1000)))
        logger.debug(f"Sensor {self.spec.uid} ({self.spec.model}) booted in {self.state.boot_ms} ms")

        profile = TransportProfile.for_kind(self.spec.transport)
        while True:
            try:
                session = await open_connection(profile, gateway)
            except ConnectionClosed as e:
                logger.debug(f"Sensor {self.spec.uid} found no gateway ({e}); retrying in {connect_retry_s}s")
                await asyncio.sleep(connect_retry_s)
                continue

            self._session = session
            self.state.sessions += 1
            try:
                await self.serve(session)
            except ConnectionClosed:
                pass
            finally:
                self._session = None
                await session.close()

            if self._reconnect.is_set():
                self._reconnect.clear()
                continue
            if self.state.lifecycle == Lifecycle.REPORTING:
                await self._reconnect.wait()
                self._reconnect.clear()
                continue
            await asyncio.sleep(connect_retry_s)
