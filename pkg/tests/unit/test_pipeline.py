"""Tests for core.gateway.pipeline module."""
import asyncio
from datetime import datetime

import pytest

from core.config import ContextConfig, GatewayConfig
from core.gateway import (
    DiscoveryPipeline,
    DiscoverySession,
    MalformedIdentity,
    PartialConfiguration,
    Phase,
    PhaseOrderError,
    PhaseTimeout,
    PhaseTimings,
    PluginCache,
    RegistryClient,
    SessionOutcome,
    TIMING_STEPS,
    context_facts,
)
from core.models import RegistrationStatus
from core.plugin import CanonicalOp, StepMismatch
from core.simsensor import SimulatedSensor
from core.wire import Message, Timeout
from tests.support import REGISTRY_URL, UID, make_sensor, make_strategy, session_pair

WINTER_NIGHT = ContextConfig(season="winter", time_band="night")


@pytest.fixture
def quiet_sensors(mocker):
    """Sensors join the registry but do not try to reach a data endpoint."""
    mocker.patch.object(SimulatedSensor, "emit_sample", mocker.AsyncMock())


@pytest.fixture
async def pipeline(registry_transport):
    config = GatewayConfig(who_timeout_s=0.2, phase_timeout_s=5.0, context=WINTER_NIGHT)
    client = RegistryClient(REGISTRY_URL, backoff_s=0, transport=registry_transport)
    yield DiscoveryPipeline(config, client, PluginCache())
    await client.close()


async def run_against(pipeline, sensor) -> DiscoverySession:
    gateway_side, sensor_side = session_pair()
    task = asyncio.create_task(sensor.serve(sensor_side))
    try:
        return await pipeline.run(gateway_side)
    finally:
        await gateway_side.close()
        await asyncio.wait_for(task, 1.0)


class TestDiscoverySession:
    """Tests for phase ordering."""

    def test_phases_advance_in_order(self):
        gateway_side, _ = session_pair()
        ds = DiscoverySession(session=gateway_side)
        for phase in list(Phase)[1:]:
            ds.advance(phase)
        assert ds.history == list(Phase)

    def test_skipping_a_phase(self):
        gateway_side, _ = session_pair()
        ds = DiscoverySession(session=gateway_side)
        with pytest.raises(PhaseOrderError):
            ds.advance(Phase.IDENTIFY)

    def test_going_back(self):
        gateway_side, _ = session_pair()
        ds = DiscoverySession(session=gateway_side)
        ds.advance(Phase.EXTRACT)
        with pytest.raises(PhaseOrderError):
            ds.advance(Phase.EXTRACT)

    def test_record_before_identification(self):
        gateway_side, _ = session_pair()
        ds = DiscoverySession(session=gateway_side)
        ds.finish(SessionOutcome.FAILED, Timeout("silent"))
        record = ds.to_record()
        assert record.uid is None
        assert record.transport == "tcp"
        assert record.phases == ["detect"]
        assert record.error == "silent"


class TestContextFacts:
    """Tests for context_facts()."""

    @pytest.mark.parametrize("month, season", [(1, "winter"), (4, "spring"), (7, "summer"), (10, "autumn"),
                                               (12, "winter")])
    def test_northern_seasons(self, month, season):
        facts = context_facts(ContextConfig(), datetime(2024, month, 15, 12))
        assert facts["season"] == season

    def test_southern_hemisphere_swaps(self):
        facts = context_facts(ContextConfig(hemisphere="south"), datetime(2024, 1, 15, 12))
        assert facts["season"] == "summer"

    @pytest.mark.parametrize("hour, band", [(5, "night"), (6, "day"), (17, "day"), (18, "night"), (23, "night")])
    def test_time_band(self, hour, band):
        assert context_facts(ContextConfig(), datetime(2024, 3, 1, hour))["time_band"] == band

    def test_fixed_values_and_extras(self):
        context = ContextConfig(season="summer", time_band="day", extra={"site": "orchard"})
        assert context_facts(context, datetime(2024, 1, 1, 2)) == {
            "site": "orchard", "season": "summer", "time_band": "day"}


class TestPhaseTimings:
    """Tests for PhaseTimings."""

    def test_empty(self):
        timings = PhaseTimings()
        assert not timings.is_complete()
        assert timings.measured_ms() == 0

    def test_measured_sum_excludes_setup(self):
        timings = PhaseTimings(**{name: float(i) for i, name in enumerate(TIMING_STEPS, start=1)})
        assert timings.is_complete()
        assert timings.measured_ms() == sum(range(2, 11))

    def test_steps_are_numbered(self):
        steps = PhaseTimings(setup=5.0).steps()
        assert steps[0] == (1, "setup", 5.0)
        assert steps[-1] == (10, "join_secure", None)

    def test_negative_duration_rejected(self):
        with pytest.raises(ValueError):
            PhaseTimings(connect=-1.0)


class TestExtractIdentity:
    """Tests for DiscoveryPipeline.extract_identity."""

    async def test_malformed_reply(self, pipeline):
        gateway_side, sensor_side = session_pair()
        ds = DiscoverySession(session=gateway_side)
        ds.advance(Phase.EXTRACT)
        await sensor_side.send(Message.of("HELLO"))
        with pytest.raises(MalformedIdentity) as exc_info:
            await pipeline.extract_identity(ds)
        assert exc_info.value.reason == "expected IAM"

    async def test_missing_fields(self, pipeline):
        gateway_side, sensor_side = session_pair()
        ds = DiscoverySession(session=gateway_side)
        ds.advance(Phase.EXTRACT)
        await sensor_side.send(Message.of("IAM", uid=UID))
        with pytest.raises(MalformedIdentity, match="missing model, mfr"):
            await pipeline.extract_identity(ds)

    async def test_bad_uid(self, pipeline):
        gateway_side, sensor_side = session_pair()
        ds = DiscoverySession(session=gateway_side)
        ds.advance(Phase.EXTRACT)
        await sensor_side.send(Message.of("IAM", uid="nothex", model="M", mfr="x"))
        with pytest.raises(MalformedIdentity):
            await pipeline.extract_identity(ds)

    async def test_setup_comes_from_boot_ms(self, pipeline):
        gateway_side, sensor_side = session_pair()
        ds = DiscoverySession(session=gateway_side)
        ds.advance(Phase.EXTRACT)
        await sensor_side.send(Message.of("IAM", uid=UID, model="WaspTemp3", mfr="libelium", boot_ms="7250"))
        identity = await pipeline.extract_identity(ds)
        assert identity.model == "WaspTemp3"
        assert ds.timings.setup == 7250
        assert ds.timings.connect is not None
        assert ds.timings.comm_init is not None
        assert ds.phase == Phase.IDENTIFY


class TestRun:
    """Tests for whole-session runs over an in-memory pipe."""

    async def test_completed(self, pipeline, registry_service, registry_transport, quiet_sensors):
        sensor = make_sensor("WaspTemp3", http_transport=registry_transport)
        ds = await run_against(pipeline, sensor)

        assert ds.outcome == SessionOutcome.COMPLETED, ds.error
        assert ds.history == list(Phase)
        assert ds.timings.is_complete()
        assert ds.receipt.values["sampling"] == "10"
        assert ds.receipt.acknowledged_ops[-1] == CanonicalOp.FINALIZE
        assert sensor.state.applied["sampling"] == "10"
        assert registry_service.record(UID).status == RegistrationStatus.CONFIGURED

    async def test_unknown_model_stops_after_identify(self, pipeline, registry_service):
        registry_service.store.catalog.delete(registry_service.store.catalog_key("WaspTemp3", "libelium"))
        ds = await run_against(pipeline, make_sensor("WaspTemp3"))
        assert ds.outcome == SessionOutcome.UNKNOWN
        assert ds.phase == Phase.IDENTIFY
        assert ds.plugin is None

    async def test_silent_device_fails(self, pipeline):
        ds = await run_against(pipeline, make_sensor("WaspTemp3", booted=False))
        # a booting sensor answers nothing, so WHO times out
        assert ds.outcome == SessionOutcome.FAILED
        assert ds.phase == Phase.EXTRACT

    async def test_no_reply_is_a_timeout(self, pipeline):
        gateway_side, _ = session_pair()
        ds = await pipeline.run(gateway_side)
        assert ds.outcome == SessionOutcome.FAILED
        assert ds.phase == Phase.EXTRACT
        assert "no frame" in ds.error

    async def test_peer_closing_aborts(self, pipeline):
        gateway_side, sensor_side = session_pair()
        await sensor_side.close()
        ds = await pipeline.run(gateway_side)
        assert ds.outcome == SessionOutcome.ABORTED


class TestConfigure:
    """Tests for DiscoveryPipeline.configure."""

    async def prepared(self, pipeline, sensor):
        gateway_side, sensor_side = session_pair()
        task = asyncio.create_task(sensor.serve(sensor_side))
        ds = DiscoverySession(session=gateway_side)
        ds.advance(Phase.EXTRACT)
        await pipeline.extract_identity(ds)
        result = await pipeline.identify(ds)
        assert result.known
        ds.advance(Phase.FIND)
        await pipeline.acquire_plugin(ds)
        await pipeline.retrieve_profile(ds)
        return ds, gateway_side, task

    async def test_out_of_range_sampling_is_partial(self, pipeline):
        sensor = make_sensor("WaspTemp3")
        ds, gateway_side, task = await self.prepared(pipeline, sensor)

        with pytest.raises(PartialConfiguration) as exc_info:
            await pipeline.configure(ds, make_strategy(sampling=5000, commfreq=6000))
        assert exc_info.value.last_acknowledged is None
        assert isinstance(exc_info.value.cause, StepMismatch)
        assert "sampling" not in sensor.state.applied

        await gateway_side.close()
        await asyncio.wait_for(task, 1.0)

    async def test_configure_is_idempotent(self, pipeline, mocker):
        mocker.patch.object(SimulatedSensor, "join_secure", mocker.AsyncMock(return_value=True))
        sensor = make_sensor("WaspAT")
        ds, gateway_side, task = await self.prepared(pipeline, sensor)

        first = await pipeline.configure(ds, make_strategy())
        applied = dict(sensor.state.applied)
        second = await pipeline.configure(ds, make_strategy())
        assert first.values == second.values
        assert sensor.state.applied == applied

        await gateway_side.close()
        await asyncio.wait_for(task, 1.0)

    async def test_running_out_of_time_is_partial(self, pipeline, mocker):
        sensor = make_sensor("WaspTemp3")
        ds, gateway_side, task = await self.prepared(pipeline, sensor)
        run_script = ds.runner.run

        async def stall_after_sampling(script, op, params):
            if op == CanonicalOp.SET_SAMPLING:
                return await run_script(script, op, params)
            await asyncio.sleep(5)

        mocker.patch.object(ds.runner, "run", side_effect=stall_after_sampling)
        pipeline.config.phase_timeout_s = 0.3
        with pytest.raises(PartialConfiguration) as exc_info:
            await pipeline.configure(ds, make_strategy())

        assert exc_info.value.last_acknowledged == CanonicalOp.SET_SAMPLING
        assert isinstance(exc_info.value.cause, PhaseTimeout)
        assert ds.receipt.acknowledged_ops == [CanonicalOp.SET_SAMPLING]
        assert ds.receipt.values["sampling"] == "10"

        await gateway_side.close()
        await asyncio.wait_for(task, 1.0)
