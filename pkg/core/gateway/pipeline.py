"""
The per-sensor discovery pipeline: detect, extract, identify, find, retrieve,
register, reason and configure, with the ten measured steps recorded as it goes.
"""
import asyncio
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum, IntEnum
from typing import Awaitable, Dict, List, Optional, Tuple, TypeVar

from pydantic import BaseModel, Field, ValidationError as PydanticValidationError

from core.config import ContextConfig, GatewayConfig
from core.gateway.cache import PluginCache
from core.gateway.client import GatewayError, RegistryClient, StrategyInfeasible
from core.models import (
    CONFIG_FIELDS,
    IdentificationResult,
    Record,
    SensingStrategy,
    SensorIdentity,
    SensorProfile,
)
from core.plugin import CanonicalOp, PluginDescriptor, PluginError, SequenceRunner, match_plugin
from core.wire import ConnectionClosed, Message, Session, Timeout, WireError

logger = logging.getLogger(__name__)

T = TypeVar("T")

WHO = "WHO"
IAM = "IAM"

# Indexed by month % 12 // 3: Dec-Feb, Mar-May, Jun-Aug, Sep-Nov
NORTHERN_SEASONS = ["winter", "spring", "summer", "autumn"]
OPPOSITE_SEASON = {"winter": "summer", "summer": "winter", "spring": "autumn", "autumn": "spring"}

# Configuration scripts in the order they are pushed, with the step each one times
CONFIGURE_STEPS: List[Tuple[CanonicalOp, str]] = [
    (CanonicalOp.SET_SAMPLING, "cfg_sampling"),
    (CanonicalOp.SET_COMMFREQ, "cfg_commfreq"),
    (CanonicalOp.SET_SCHEDULE, "cfg_schedule"),
    (CanonicalOp.SET_NETWORK, "cfg_network"),
    (CanonicalOp.FINALIZE, "join_secure"),
]


class MalformedIdentity(GatewayError):
    """The device answered WHO with something that is not a valid IAM."""

    def __init__(self, reply: Message, reason: str):
        super().__init__(f"malformed identity ({reason}): {reply}")
        self.reply = reply
        self.reason = reason


class PhaseOrderError(GatewayError):
    """A phase was entered before its predecessor completed."""
    pass


class PhaseTimeout(GatewayError):
    def __init__(self, phase: "Phase", timeout_s: float):
        super().__init__(f"phase {phase.name.lower()} exceeded {timeout_s:g}s")
        self.phase = phase


class PluginMismatch(GatewayError):
    """The plugin named by the registry does not cover the sensor's model."""
    pass


class PartialConfiguration(GatewayError):
    """Configuration stopped part-way; earlier scripts stay acknowledged."""

    def __init__(self, last_acknowledged: Optional[CanonicalOp], cause: Exception):
        done = last_acknowledged.value if last_acknowledged else "nothing"
        super().__init__(f"configuration stopped after {done}: {cause}")
        self.last_acknowledged = last_acknowledged
        self.cause = cause


class Phase(IntEnum):
    DETECT = 1
    EXTRACT = 2
    IDENTIFY = 3
    FIND = 4
    RETRIEVE = 5
    REGISTER = 6
    REASON = 7
    CONFIGURE = 8


class SessionOutcome(str, Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    UNKNOWN = "unknown"
    FAILED = "failed"
    ABORTED = "aborted"


# Measured steps, numbered as they are reported
TIMING_STEPS: List[str] = [
    "setup",
    "connect",
    "comm_init",
    "extract_id",
    "retrieve_profile",
    "cfg_sampling",
    "cfg_commfreq",
    "cfg_schedule",
    "cfg_network",
    "join_secure",
]


class PhaseTimings(BaseModel):
    """Durations in milliseconds of the ten measured steps."""
    setup: Optional[float] = Field(default=None, ge=0)
    connect: Optional[float] = Field(default=None, ge=0)
    comm_init: Optional[float] = Field(default=None, ge=0)
    extract_id: Optional[float] = Field(default=None, ge=0)
    retrieve_profile: Optional[float] = Field(default=None, ge=0)
    cfg_sampling: Optional[float] = Field(default=None, ge=0)
    cfg_commfreq: Optional[float] = Field(default=None, ge=0)
    cfg_schedule: Optional[float] = Field(default=None, ge=0)
    cfg_network: Optional[float] = Field(default=None, ge=0)
    join_secure: Optional[float] = Field(default=None, ge=0)

    def is_complete(self) -> bool:
        return all(getattr(self, name) is not None for name in TIMING_STEPS)

    def measured_ms(self) -> float:
        """Sum of the gateway-measured steps (2) to (10)."""
        return sum(getattr(self, name) or 0.0 for name in TIMING_STEPS[1:])

    def steps(self) -> List[Tuple[int, str, Optional[float]]]:
        return [(number, name, getattr(self, name)) for number, name in enumerate(TIMING_STEPS, start=1)]


class ConfiguredReceipt(Record):
    """What the sensor acknowledged during configuration."""
    uid: str
    acknowledged_ops: List[CanonicalOp]
    values: Dict[str, str]
    captures: Dict[str, str] = Field(default_factory=dict)


class SessionRecord(Record):
    """Summary of a finished session as served by the status endpoint."""
    uid: Optional[str] = None
    model: Optional[str] = None
    transport: str
    outcome: SessionOutcome
    phases: List[str]
    timings: PhaseTimings
    aux_ms: Dict[str, float] = Field(default_factory=dict)
    wall_ms: float
    error: Optional[str] = None
    acknowledged_ops: List[CanonicalOp] = Field(default_factory=list)
    # pushed config values, join token withheld
    applied: Dict[str, str] = Field(default_factory=dict)


def _ms(start: float, end: float) -> float:
    return max(0.0, (end - start) * 1000)


@dataclass
class DiscoverySession:
    """Pipeline state for one accepted session."""
    session: Session
    phase: Phase = Phase.DETECT
    history: List[Phase] = field(default_factory=lambda: [Phase.DETECT])
    identity: Optional[SensorIdentity] = None
    identification: Optional[IdentificationResult] = None
    plugin: Optional[PluginDescriptor] = None
    profile: Optional[SensorProfile] = None
    strategy: Optional[SensingStrategy] = None
    receipt: Optional[ConfiguredReceipt] = None
    timings: PhaseTimings = field(default_factory=PhaseTimings)
    aux_ms: Dict[str, float] = field(default_factory=dict)
    outcome: SessionOutcome = SessionOutcome.RUNNING
    error: Optional[str] = None
    started_at: float = field(default_factory=time.monotonic)
    finished_at: Optional[float] = None
    runner: Optional[SequenceRunner] = None

    def advance(self, phase: Phase) -> None:
        if phase != self.phase + 1:
            raise PhaseOrderError(f"cannot enter {phase.name.lower()} from {self.phase.name.lower()}")
        self.phase = phase
        self.history.append(phase)

    @property
    def wall_ms(self) -> float:
        """Accept to end of the session (or now while running)."""
        end = self.finished_at if self.finished_at is not None else time.monotonic()
        return _ms(self.session.accepted_at, end)

    def finish(self, outcome: SessionOutcome, error: Optional[Exception] = None) -> None:
        self.outcome = outcome
        self.error = str(error) if error else None
        self.finished_at = time.monotonic()

    def to_record(self) -> SessionRecord:
        return SessionRecord(
            uid=self.identity.uid if self.identity else None,
            model=self.identity.model if self.identity else None,
            transport=self.session.profile.kind.value,
            outcome=self.outcome,
            phases=[phase.name.lower() for phase in self.history],
            timings=self.timings,
            aux_ms=dict(self.aux_ms),
            wall_ms=self.wall_ms,
            error=self.error,
            acknowledged_ops=list(self.receipt.acknowledged_ops) if self.receipt else [],
            applied={key: value for key, value in self.receipt.values.items() if key != "token"}
            if self.receipt else {},
        )


def context_facts(context: ContextConfig, now: Optional[datetime] = None) -> Dict[str, str]:
    """
    Facts forwarded to the reasoner. 'auto' season/time_band come from the local clock:
    winter is Dec-Feb in the north and Jun-Aug in the south, night is 18:00-06:00.
    """
    now = now or datetime.now()
    facts = dict(context.extra)

    season = context.season
    if season == "auto":
        season = NORTHERN_SEASONS[now.month % 12 // 3]
        if context.hemisphere == "south":
            season = OPPOSITE_SEASON[season]
    facts["season"] = season

    time_band = context.time_band
    if time_band == "auto":
        time_band = "night" if now.hour >= 18 or now.hour < 6 else "day"
    facts["time_band"] = time_band
    return facts


class DiscoveryPipeline:
    """
    Drives one session through the eight phases. Shared by every worker;
    per-session state lives in DiscoverySession.
    """

    def __init__(self, config: GatewayConfig, client: RegistryClient, cache: PluginCache):
        self.config = config
        self.client = client
        self.cache = cache

    async def _bounded(self, phase: Phase, work: Awaitable[T]) -> T:
        try:
            return await asyncio.wait_for(work, timeout=self.config.phase_timeout_s)
        except asyncio.TimeoutError:
            raise PhaseTimeout(phase, self.config.phase_timeout_s)

    async def extract_identity(self, ds: DiscoverySession, slot_at: Optional[float] = None) -> SensorIdentity:
        """
        Send WHO and parse the IAM reply.

        Raises:
            Timeout: Silent device
            MalformedIdentity: Reply is not a valid IAM
        """
        session = ds.session
        ds.timings.connect = _ms(session.accepted_at, session.ready_at)
        reply = await session.request(Message.of(WHO), timeout=self.config.who_timeout_s)

        who_at = next(entry.at for entry in reversed(session.log) if entry.direction == "out")
        iam_at = time.monotonic()
        ds.timings.comm_init = _ms(max(session.ready_at, slot_at or session.ready_at), who_at)
        ds.timings.extract_id = _ms(who_at, iam_at)

        if reply.verb != IAM:
            raise MalformedIdentity(reply, f"expected {IAM}")
        missing = [key for key in ("uid", "model", "mfr") if reply.get(key) is None]
        if missing:
            raise MalformedIdentity(reply, f"missing {', '.join(missing)}")
        try:
            identity = SensorIdentity(uid=reply.get("uid"), model=reply.get("model"),
                                      manufacturer=reply.get("mfr"))
        except PydanticValidationError as e:
            raise MalformedIdentity(reply, e.errors()[0]["msg"])

        try:
            ds.timings.setup = max(0.0, float(reply.get("boot_ms") or 0))
        except ValueError:
            logger.warning(f"{session.peer_label} reported an unreadable boot_ms: {reply.get('boot_ms')!r}")
            ds.timings.setup = 0.0

        ds.identity = identity
        ds.advance(Phase.IDENTIFY)
        logger.debug(f"{session.peer_label} is {identity.model}/{identity.manufacturer} ({identity.uid})")
        return identity

    async def identify(self, ds: DiscoverySession) -> IdentificationResult:
        start = time.monotonic()
        result = await self.client.identify(ds.identity)
        ds.aux_ms["identify"] = _ms(start, time.monotonic())
        ds.identification = result
        return result

    async def acquire_plugin(self, ds: DiscoverySession) -> PluginDescriptor:
        """
        Install (or reuse) the plugin the registry named, then check it covers the sensor.

        Raises:
            FetchError: Unknown or tampered plugin
            ParseError, ValidationError: Corrupt descriptor
            PluginMismatch: Plugin is for another model
        """
        start = time.monotonic()
        result = ds.identification
        try:
            descriptor = await self.cache.acquire(result.plugin_id, result.plugin_digest, self.client)
        except PluginError:
            self.cache.evict(result.plugin_id)
            raise
        if match_plugin(ds.identity, [descriptor]) is None:
            raise PluginMismatch(f"plugin {descriptor.plugin_id} does not cover "
                                 f"{ds.identity.model}/{ds.identity.manufacturer}")
        ds.aux_ms["find"] = _ms(start, time.monotonic())
        ds.plugin = descriptor
        ds.advance(Phase.RETRIEVE)
        return descriptor

    async def retrieve_profile(self, ds: DiscoverySession) -> SensorProfile:
        """
        Run handshake and retrieve_profile, and build the profile from the captures.

        Raises:
            StepMismatch, StepTimeout: Propagated from the interpreter
            GatewayError: Captures do not form a valid profile
        """
        start = time.monotonic()
        ds.runner = SequenceRunner(ds.session, {"uid": ds.identity.uid})
        await ds.runner.run_op(ds.plugin, CanonicalOp.HANDSHAKE)
        await ds.runner.run_op(ds.plugin, CanonicalOp.RETRIEVE_PROFILE)
        ds.timings.retrieve_profile = _ms(start, time.monotonic())

        try:
            profile = SensorProfile.from_captures(ds.identity, ds.runner.memory)
        except (KeyError, ValueError) as e:
            raise GatewayError(f"profile captures from {ds.identity.uid} are invalid: {e}")
        ds.profile = profile
        ds.advance(Phase.REGISTER)
        return profile

    async def register_and_reason(self, ds: DiscoverySession, now: Optional[datetime] = None) -> SensingStrategy:
        """
        Register the profile, obtain a strategy and merge in the join credentials.

        Raises:
            RegistryUnreachable: After the client's retries
            StrategyInfeasible: Strategy outside the profile's range
        """
        start = time.monotonic()
        await self.client.register(ds.profile)
        ds.aux_ms["register"] = _ms(start, time.monotonic())
        ds.advance(Phase.REASON)

        start = time.monotonic()
        strategy = await self.client.strategy(ds.identity.uid, context_facts(self.config.context, now))
        credentials = await self.client.credentials(ds.identity.uid)
        ds.aux_ms["reason"] = _ms(start, time.monotonic())

        strategy = strategy.model_copy(update={"credentials": credentials})
        if not strategy.is_feasible_for(ds.profile):
            raise StrategyInfeasible(f"sampling {strategy.sampling_s:g}s is outside "
                                     f"{ds.profile.sampling_range.min_s:g}-{ds.profile.sampling_range.max_s:g}s "
                                     f"for {ds.identity.uid}")
        ds.strategy = strategy
        ds.advance(Phase.CONFIGURE)
        return strategy

    async def configure(self, ds: DiscoverySession, strategy: Optional[SensingStrategy] = None) -> ConfiguredReceipt:
        """
        Push the strategy through the set_* scripts and finalize.

        The whole push shares one phase_timeout_s budget; running out of it
        is reported like any other script failure.

        Raises:
            PartialConfiguration: A script failed or the budget ran out; carries the last acknowledged one
        """
        strategy = strategy or ds.strategy
        if ds.runner is None:
            ds.runner = SequenceRunner(ds.session, {"uid": ds.identity.uid})
        params = strategy.to_params()
        acknowledged: List[CanonicalOp] = []
        values: Dict[str, str] = {}
        captures: Dict[str, str] = {}
        deadline = asyncio.get_running_loop().time() + self.config.phase_timeout_s

        for op, step_name in CONFIGURE_STEPS:
            script = ds.plugin.script(op)
            start = time.monotonic()
            try:
                async with asyncio.timeout_at(deadline):
                    captures.update(await ds.runner.run(script, op, params))
            except (PluginError, WireError, TimeoutError) as e:
                ds.receipt = ConfiguredReceipt(uid=ds.identity.uid, acknowledged_ops=acknowledged,
                                               values=values, captures=captures)
                cause = PhaseTimeout(Phase.CONFIGURE, self.config.phase_timeout_s) \
                    if isinstance(e, TimeoutError) else e
                raise PartialConfiguration(acknowledged[-1] if acknowledged else None, cause) from e
            setattr(ds.timings, step_name, _ms(start, time.monotonic()))
            acknowledged.append(op)
            for step in script.steps:
                values.update({name: params[name] for name in step.referenced() if name in CONFIG_FIELDS})

        receipt = ConfiguredReceipt(uid=ds.identity.uid, acknowledged_ops=acknowledged,
                                    values=values, captures=captures)
        ds.receipt = receipt
        return receipt

    async def run(self, session: Session, slot_at: Optional[float] = None) -> DiscoverySession:
        """
        Take one session through every phase. Never raises for per-session
        failures; the outcome is recorded on the returned DiscoverySession.
        """
        ds = DiscoverySession(session=session)
        try:
            ds.advance(Phase.EXTRACT)
            await self._bounded(Phase.EXTRACT, self.extract_identity(ds, slot_at))

            result = await self._bounded(Phase.IDENTIFY, self.identify(ds))
            if not result.known:
                logger.info(f"Unknown sensor {ds.identity.model}/{ds.identity.manufacturer} "
                            f"({ds.identity.uid}); stopping discovery")
                ds.finish(SessionOutcome.UNKNOWN)
                return ds
            ds.advance(Phase.FIND)

            await self._bounded(Phase.FIND, self.acquire_plugin(ds))
            await self._bounded(Phase.RETRIEVE, self.retrieve_profile(ds))
            await self._bounded(Phase.REASON, self.register_and_reason(ds))
            await self.configure(ds)
        except ConnectionClosed as e:
            logger.info(f"{session.peer_label} went away during {ds.phase.name.lower()}: {e}")
            ds.finish(SessionOutcome.ABORTED, e)
            return ds
        except PartialConfiguration as e:
            outcome = SessionOutcome.ABORTED if isinstance(e.cause, ConnectionClosed) else SessionOutcome.FAILED
            logger.warning(f"{session.peer_label}: {e}")
            ds.finish(outcome, e)
            return ds
        except (GatewayError, PluginError, WireError) as e:
            level = logging.INFO if isinstance(e, Timeout) else logging.WARNING
            logger.log(level, f"{session.peer_label} failed in {ds.phase.name.lower()}: {e}")
            ds.finish(SessionOutcome.FAILED, e)
            return ds

        ds.finish(SessionOutcome.COMPLETED)
        logger.info(f"Configured {ds.identity.model} {ds.identity.uid} over {session.profile.kind.value} "
                    f"in {ds.wall_ms:.0f} ms")
        return ds
