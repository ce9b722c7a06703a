"""Tests for core.simsensor.sensor module."""
import asyncio

import pytest

from core.models import ALWAYS_ON
from core.simsensor import Lifecycle, SHIPPED_MODELS, SensorState, SimSensorError, config_value_ok
from core.simsensor.sensor import DialectResponder, bind_inbound
from core.wire import Message
from tests.support import UID, make_sensor, session_pair


def responder(sensor) -> DialectResponder:
    return DialectResponder(sensor)


class TestBindInbound:
    """Tests for bind_inbound()."""

    def test_placeholders_bind(self):
        template = Message(verb="SET", args=(("sampling", "${sampling}"),))
        assert bind_inbound(template, Message.of("SET", sampling="10")) == {"sampling": "10"}

    def test_literal_must_match(self):
        template = Message(verb="CFG", args=(("op", "describe"),))
        assert bind_inbound(template, Message.of("CFG", op="describe")) == {}
        assert bind_inbound(template, Message.of("CFG", op="info")) is None

    def test_key_sets_must_match(self):
        template = Message(verb="SET", args=(("sampling", "${sampling}"),))
        assert bind_inbound(template, Message.of("SET", sampling="10", mode="x")) is None
        assert bind_inbound(template, Message.of("SET")) is None

    def test_verb_must_match(self):
        assert bind_inbound(Message.of("HELLO"), Message.of("HOLA")) is None

    def test_argument_order_is_irrelevant(self):
        template = Message(verb="NET", args=(("h", "${host}"), ("p", "${port}")))
        inbound = Message(verb="NET", args=(("p", "7900"), ("h", "10.0.0.1")))
        assert bind_inbound(template, inbound) == {"host": "10.0.0.1", "port": "7900"}


class TestIdentity:
    """Every sensor answers WHO, whatever its dialect."""

    async def test_who_in_every_dialect(self):
        for model in SHIPPED_MODELS:
            sensor = make_sensor(model.model)
            reply = await responder(sensor).respond(Message.of("WHO"))
            assert reply.verb == "IAM"
            assert reply.get("uid") == UID
            assert reply.get("model") == model.model
            assert reply.get("mfr") == "libelium"

    async def test_booting_sensor_ignores_who(self):
        sensor = make_sensor("WaspTemp3", booted=False)
        assert await responder(sensor).respond(Message.of("WHO")) is None

        sensor.boot(1200)
        reply = await responder(sensor).respond(Message.of("WHO"))
        assert reply.verb == "IAM"

    async def test_iam_reports_boot_time(self):
        sensor = make_sensor("WaspTemp3", booted=False)
        sensor.boot(7250)
        assert sensor.iam().get("boot_ms") == "7250"


class TestResponder:
    """Tests for DialectResponder."""

    async def test_booting_sensor_stays_silent(self):
        sensor = make_sensor("WaspTemp3", booted=False)
        assert await responder(sensor).respond(Message.of("HELLO")) is None

    async def test_unknown_frame(self):
        reply = await responder(make_sensor("WaspTemp3")).respond(Message.of("FOO"))
        assert reply == Message.of("ERR", code="unknown")

    async def test_operation_before_handshake_is_denied(self):
        reply = await responder(make_sensor("WaspTemp3")).respond(Message.of("GETPROF"))
        assert reply == Message.of("ERR", code="denied")

    async def test_handshake_then_profile(self):
        r = responder(make_sensor("WaspTemp3"))
        assert await r.respond(Message.of("HELLO")) == Message.of("OLLEH")
        profile = await r.respond(Message.of("GETPROF"))
        assert profile.verb == "PROF"
        assert profile.get("caps") == "temperature:celsius:float"
        assert profile.get("smin") == "1"
        assert profile.get("smax") == "3600"
        assert profile.get("tr") == "tcp,udp,bt-sim"

    async def test_out_of_range_value_rejected(self):
        sensor = make_sensor("WaspTemp3")
        r = responder(sensor)
        await r.respond(Message.of("HELLO"))
        reply = await r.respond(Message.of("SET", sampling="5000"))
        assert reply == Message.of("ERR", code="range", field="sampling")
        assert "sampling" not in sensor.state.applied
        assert sensor.state.lifecycle == Lifecycle.DISCOVERABLE

    async def test_in_range_value_acknowledged(self):
        sensor = make_sensor("WaspTemp3")
        r = responder(sensor)
        await r.respond(Message.of("HELLO"))
        reply = await r.respond(Message.of("SET", sampling="10"))
        assert reply == Message.of("ACK", field="sampling", value="10")
        assert sensor.state.applied == {"sampling": "10"}
        assert sensor.state.lifecycle == Lifecycle.CONFIGURED

    async def test_wrong_session_id(self, mocker):
        mocker.patch("core.simsensor.sensor.secrets.token_hex", return_value="00c0ffee")
        r = responder(make_sensor("WaspCfg"))
        await r.respond(Message.of("SYN", v="1"))
        reply = await r.respond(Message.of("CFG", sid="deadbeef", op="describe"))
        assert reply == Message.of("ERR", code="mismatch", field="sid")

    async def test_finalize_refused_without_credentials(self):
        r = responder(make_sensor("WaspTemp3"))
        await r.respond(Message.of("HELLO"))
        assert await r.respond(Message.of("COMMIT")) == Message.of("ERR", code="refused")

    async def test_reversed_acknowledgement_order(self):
        # hello-02 reverses ack arguments
        model = next(m for m in SHIPPED_MODELS if m.dialect == "hello-02")
        r = responder(make_sensor(model.model))
        await r.respond(Message.of("HELLO", rev="02"))
        reply = await r.respond(Message.of("SET", sampling="10"))
        assert reply.args == (("value", "10"), ("field", "sampling"))


class TestLifecycle:
    """Tests for the sensor lifecycle."""

    def test_forward_only(self):
        state = SensorState()
        state.advance(Lifecycle.DISCOVERABLE)
        state.advance(Lifecycle.REPORTING)
        with pytest.raises(SimSensorError):
            state.advance(Lifecycle.CONFIGURED)

    def test_credentials_need_all_three_fields(self):
        state = SensorState(applied={"host": "127.0.0.1", "port": "7900"})
        assert state.credentials is None
        state.applied["token"] = "ab" * 16
        assert state.credentials.port == 7900

    def test_apply_config(self):
        sensor = make_sensor("WaspHum")
        assert not sensor.apply_config("sampling", "1")
        assert sensor.state.lifecycle == Lifecycle.DISCOVERABLE
        assert sensor.apply_config("sampling", "5")
        assert sensor.state.lifecycle == Lifecycle.CONFIGURED

    async def test_join_without_credentials_refused(self):
        sensor = make_sensor("WaspTemp3")
        assert await sensor.join_secure() is False
        assert sensor.state.lifecycle == Lifecycle.DISCOVERABLE

    async def test_rejoin_with_same_token_is_idempotent(self, mocker):
        sensor = make_sensor("WaspTemp3")
        for field, value in {"host": "127.0.0.1", "port": "7900", "token": "ab" * 16}.items():
            sensor.apply_config(field, value)
        sensor.state.advance(Lifecycle.REPORTING)
        sensor.state.joined_token = "ab" * 16
        client = mocker.patch("core.simsensor.sensor.httpx.AsyncClient")

        assert await sensor.join_secure() is True
        client.assert_not_called()


class TestConfigValueOk:
    """Tests for config_value_ok()."""

    @pytest.fixture
    def spec(self):
        return make_sensor("WaspCO2").spec  # 10-1800 s, no schedules

    @pytest.mark.parametrize("field, value, ok", [
        ("sampling", "10", True),
        ("sampling", "1800", True),
        ("sampling", "9.5", False),
        ("sampling", "abc", False),
        ("commfreq", "0", False),
        ("commfreq", "60", True),
        ("schedule", ALWAYS_ON, True),
        ("schedule", "MO-FR:08:00-17:00", False),
        ("acq_resp", "pull", True),
        ("acq_resp", "poll", False),
        ("acq_freq", "instant", True),
        ("mode", "sleep", True),
        ("mode", "off", False),
        ("port", "0", False),
        ("port", "7900", True),
        ("token", "ab" * 16, True),
        ("token", "AB" * 16, False),
        ("colour", "red", False),
    ])
    def test_values(self, spec, field, value, ok):
        assert config_value_ok(spec, field, value) is ok

    def test_schedules_accepted_when_supported(self):
        spec = make_sensor("WaspTemp3").spec
        assert config_value_ok(spec, "schedule", "MO-FR:08:00-17:00")


class TestServe:
    """Tests for SimulatedSensor.serve over a session."""

    async def test_answers_until_peer_closes(self):
        sensor = make_sensor("WaspTemp3")
        gateway, sensor_side = session_pair()
        task = asyncio.create_task(sensor.serve(sensor_side))

        assert (await gateway.request(Message.of("WHO"))).verb == "IAM"
        assert (await gateway.request(Message.of("HELLO"))).verb == "OLLEH"
        await gateway.close()
        await asyncio.wait_for(task, 1.0)

    async def test_detach_ends_the_conversation(self):
        sensor = make_sensor("WaspTemp3")
        gateway, sensor_side = session_pair()
        task = asyncio.create_task(sensor.serve(sensor_side))
        await gateway.send(Message.of("DETACH"))
        await asyncio.wait_for(task, 1.0)
