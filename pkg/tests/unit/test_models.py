"""Tests for core.models module."""
import pytest
from datetime import datetime, timezone

from core.models import (
    ALWAYS_ON,
    Capability,
    Credentials,
    RegistrationRecord,
    SamplingRange,
    ScheduleWindow,
    SensingStrategy,
    SensorIdentity,
    SensorMode,
    SensorProfile,
    ValueType,
    format_schedule,
    format_seconds,
    parse_schedule,
)
from tests.support import make_profile, make_strategy


class TestSensorIdentity:
    """Tests for SensorIdentity."""

    def test_valid_identity(self):
        """Test that a 16 hex character uid is accepted."""
        identity = SensorIdentity(uid="a1b2c3d4e5f60708", model="WaspTemp3", manufacturer="libelium")
        assert identity.uid == "a1b2c3d4e5f60708"

    @pytest.mark.parametrize("uid", ["A1B2C3D4E5F60708", "a1b2", "a1b2c3d4e5f6070g", ""])
    def test_invalid_uid_rejected(self, uid):
        """Test that uppercase, short and non-hex uids are rejected."""
        with pytest.raises(ValueError):
            SensorIdentity(uid=uid, model="m", manufacturer="x")

    def test_identity_is_frozen(self):
        """Test that records cannot be mutated."""
        identity = SensorIdentity(uid="a1b2c3d4e5f60708", model="m", manufacturer="x")
        with pytest.raises(ValueError):
            identity.model = "other"


class TestCapability:
    """Tests for Capability wire form."""

    def test_from_wire(self):
        cap = Capability.from_wire("luminosity:lux:int")
        assert cap.phenomenon == "luminosity"
        assert cap.unit == "lux"
        assert cap.value_type == ValueType.INT

    def test_to_wire(self):
        assert Capability(phenomenon="co2", unit="ppm").to_wire() == "co2:ppm:float"

    def test_from_wire_rejects_short_form(self):
        with pytest.raises(ValueError):
            Capability.from_wire("co2:ppm")


class TestSamplingRange:
    """Tests for SamplingRange."""

    def test_contains_is_inclusive(self):
        window = SamplingRange(min_s=1, max_s=3600)
        assert window.contains(1)
        assert window.contains(3600)
        assert not window.contains(0.5)
        assert not window.contains(3601)

    def test_midpoint(self):
        assert SamplingRange(min_s=10, max_s=30).midpoint == 20

    def test_min_above_max_rejected(self):
        with pytest.raises(ValueError):
            SamplingRange(min_s=10, max_s=5)

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            SamplingRange(min_s=0, max_s=5)


class TestSensorProfile:
    """Tests for SensorProfile."""

    def test_from_captures(self):
        """Test that canonical captures build a full profile."""
        identity = SensorIdentity(uid="a1b2c3d4e5f60708", model="WaspEnvTHM", manufacturer="libelium")
        profile = SensorProfile.from_captures(identity, {
            "caps": "temperature:celsius:float,humidity:percent:float",
            "smin": "1",
            "smax": "600",
            "sched": "1",
            "transports": "tcp,udp",
            "epc": "",
        })
        assert profile.phenomena == ["temperature", "humidity"]
        assert profile.sampling_range == SamplingRange(min_s=1, max_s=600)
        assert profile.supports_schedules is True
        assert profile.transports == ["tcp", "udp"]
        assert profile.epc is None

    def test_from_captures_requires_range(self):
        identity = SensorIdentity(uid="a1b2c3d4e5f60708", model="m", manufacturer="x")
        with pytest.raises(KeyError):
            SensorProfile.from_captures(identity, {"caps": "t:c:float"})

    def test_profile_needs_a_capability(self):
        with pytest.raises(ValueError):
            make_profile(phenomena=())

    def test_dict_roundtrip(self):
        profile = make_profile(phenomena=("temperature", "humidity"))
        assert SensorProfile.from_dict(profile.to_dict()) == profile


class TestSchedule:
    """Tests for schedule windows."""

    def test_always_on_parses(self):
        windows = parse_schedule(ALWAYS_ON)
        assert len(windows) == 1
        assert windows[0].first_day == "MO"
        assert windows[0].last_day == "SU"
        assert windows[0].end == "24:00"

    def test_single_day_window(self):
        window = ScheduleWindow.from_wire("SA:10:00-12:00")
        assert window.first_day == window.last_day == "SA"
        assert window.to_wire() == "SA:10:00-12:00"

    def test_format_multiple(self):
        text = "MO-FR:08:00-17:00,SA:10:00-12:00"
        assert format_schedule(parse_schedule(text)) == text

    def test_format_empty_is_always_on(self):
        assert format_schedule([]) == ALWAYS_ON

    def test_midnight_closes_a_window(self):
        window = ScheduleWindow.from_wire("FR:20:00-24:00")
        assert window.end == "24:00"
        assert ScheduleWindow.from_wire("FR:23:59-24:00").start == "23:59"

    @pytest.mark.parametrize("text", [
        "XX:08:00-17:00", "MO-FR:8:00-17:00", "MO-FR:25:00-17:00", "MO-FR",
        "MO-FR:08:00-24:59", "MO-FR:24:00-24:00", "MO:08:60-09:00",
    ])
    def test_bad_windows_rejected(self, text):
        with pytest.raises(ValueError):
            ScheduleWindow.from_wire(text)


class TestSensingStrategy:
    """Tests for SensingStrategy."""

    def test_commfreq_below_sampling_rejected(self):
        with pytest.raises(ValueError):
            SensingStrategy(sampling_s=60, commfreq_s=10)

    def test_feasible_when_active_and_in_range(self):
        profile = make_profile(smin=5, smax=100)
        assert make_strategy(sampling=10).is_feasible_for(profile)
        assert not make_strategy(sampling=300, commfreq=300).is_feasible_for(profile)

    def test_sleep_is_always_feasible(self):
        profile = make_profile(smin=5, smax=100)
        strategy = SensingStrategy(sampling_s=300, commfreq_s=300, mode=SensorMode.SLEEP)
        assert strategy.is_feasible_for(profile)

    def test_to_params_renders_every_config_field(self):
        params = make_strategy(sampling=10, commfreq=60, token="ab" * 16).to_params()
        assert params == {
            "sampling": "10",
            "commfreq": "60",
            "schedule": ALWAYS_ON,
            "acq_resp": "push",
            "acq_freq": "interval",
            "mode": "active",
            "host": "127.0.0.1",
            "port": "7900",
            "token": "ab" * 16,
        }

    def test_to_params_without_credentials(self):
        params = SensingStrategy(sampling_s=0.5, commfreq_s=3).to_params()
        assert params["sampling"] == "0.5"
        assert "token" not in params

    def test_format_seconds(self):
        assert format_seconds(10.0) == "10"
        assert format_seconds(0.25) == "0.25"


class TestRegistrationRecord:
    """Tests for RegistrationRecord."""

    def test_uid_comes_from_profile(self):
        record = RegistrationRecord(profile=make_profile(), registered_at=datetime.now(timezone.utc))
        assert record.uid == "a1b2c3d4e5f60708"

    def test_to_dict_is_json_compatible(self):
        when = datetime(2025, 1, 2, 3, 4, 5, tzinfo=timezone.utc)
        record = RegistrationRecord(profile=make_profile(), registered_at=when,
                                    strategy=make_strategy())
        data = record.to_dict()
        assert isinstance(data["registered_at"], str)
        assert data["status"] == "registered"
        assert RegistrationRecord.from_dict(data) == record

    def test_credentials_port_range(self):
        with pytest.raises(ValueError):
            Credentials(host="h", port=70000, token="t")
