"""
Shared records exchanged between the gateway, the registry and the simulated sensors.
"""
import re
from datetime import datetime
from enum import Enum
from typing import Dict, Any, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

UID_PATTERN = re.compile(r"^[0-9a-f]{16}$")
DAY_CODES = ["MO", "TU", "WE", "TH", "FR", "SA", "SU"]
ALWAYS_ON = "MO-SU:00:00-24:00"

# Strategy fields a sensor accepts through its set_* sequences
CONFIG_FIELDS = ["sampling", "commfreq", "schedule", "acq_resp", "acq_freq", "mode", "host", "port", "token"]


def format_seconds(value: float) -> str:
    """Render a duration in seconds the way it travels on the wire (10.0 -> '10', 0.5 -> '0.5')."""
    return f"{value:g}"


class Record(BaseModel):
    """
    Base model for all records.
    Provides the dict conversions used by the store and the HTTP API.
    """
    model_config = ConfigDict(frozen=True)

    def to_dict(self) -> Dict[str, Any]:
        """Convert the record to a JSON-compatible dictionary."""
        return self.model_dump(mode="json")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]):
        """Create an instance from dictionary data."""
        return cls.model_validate(data)


class SensorIdentity(Record):
    """The minimal triple a sensor reveals when asked WHO it is."""
    uid: str
    model: str = Field(min_length=1)
    manufacturer: str = Field(min_length=1)

    @field_validator("uid")
    @classmethod
    def _uid_is_hex(cls, value: str) -> str:
        if not UID_PATTERN.match(value):
            raise ValueError(f"uid must be 16 lowercase hex characters, got {value!r}")
        return value


class ValueType(str, Enum):
    FLOAT = "float"
    INT = "int"
    BOOL = "bool"
    BLOB = "blob"


class Capability(Record):
    phenomenon: str = Field(min_length=1)
    unit: str
    value_type: ValueType = ValueType.FLOAT

    def to_wire(self) -> str:
        return f"{self.phenomenon}:{self.unit}:{self.value_type.value}"

    @classmethod
    def from_wire(cls, text: str) -> "Capability":
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"capability must be phenomenon:unit:type, got {text!r}")
        return cls(phenomenon=parts[0], unit=parts[1], value_type=ValueType(parts[2]))


class SamplingRange(Record):
    min_s: float = Field(gt=0)
    max_s: float = Field(gt=0)

    @model_validator(mode="after")
    def _ordered(self) -> "SamplingRange":
        if self.min_s > self.max_s:
            raise ValueError(f"sampling min {self.min_s}s exceeds max {self.max_s}s")
        return self

    def contains(self, value: float) -> bool:
        return self.min_s <= value <= self.max_s

    @property
    def midpoint(self) -> float:
        return (self.min_s + self.max_s) / 2


class SensorProfile(Record):
    """Full capability/configuration description retrieved from a sensor and registered in the cloud."""
    identity: SensorIdentity
    capabilities: List[Capability] = Field(min_length=1)
    sampling_range: SamplingRange
    supports_schedules: bool = False
    transports: List[str] = Field(default_factory=list)
    epc: Optional[str] = None

    @property
    def phenomena(self) -> List[str]:
        return [cap.phenomenon for cap in self.capabilities]

    @classmethod
    def from_captures(cls, identity: SensorIdentity, captures: Dict[str, str]) -> "SensorProfile":
        """Build a profile from the canonical captures of a retrieve_profile script."""
        caps = [Capability.from_wire(item) for item in captures.get("caps", "").split(",") if item]
        transports = [item for item in captures.get("transports", "").split(",") if item]
        return cls(
            identity=identity,
            capabilities=caps,
            sampling_range=SamplingRange(min_s=float(captures["smin"]), max_s=float(captures["smax"])),
            supports_schedules=captures.get("sched", "0") in ("1", "true", "yes"),
            transports=transports,
            epc=captures.get("epc") or None,
        )


class ScheduleWindow(Record):
    """A weekly sensing window such as MO-FR:08:00-17:00."""
    first_day: str
    last_day: str
    start: str
    end: str

    @field_validator("first_day", "last_day")
    @classmethod
    def _known_day(cls, value: str) -> str:
        if value not in DAY_CODES:
            raise ValueError(f"unknown day code {value!r}")
        return value

    @field_validator("start", "end")
    @classmethod
    def _clock(cls, value: str, info: ValidationInfo) -> str:
        if value == "24:00" and info.field_name == "end":
            return value
        match = re.match(r"^(\d{2}):(\d{2})$", value)
        if not match or int(match.group(1)) > 23 or int(match.group(2)) > 59:
            raise ValueError(f"time must be HH:MM (24:00 only as an end), got {value!r}")
        return value

    def to_wire(self) -> str:
        days = self.first_day if self.first_day == self.last_day else f"{self.first_day}-{self.last_day}"
        return f"{days}:{self.start}-{self.end}"

    @classmethod
    def from_wire(cls, text: str) -> "ScheduleWindow":
        match = re.match(r"^([A-Z]{2})(?:-([A-Z]{2}))?:(\d{2}:\d{2})-(\d{2}:\d{2})$", text)
        if not match:
            raise ValueError(f"schedule window must look like MO-FR:08:00-17:00, got {text!r}")
        first, last, start, end = match.groups()
        return cls(first_day=first, last_day=last or first, start=start, end=end)


def parse_schedule(text: str) -> List[ScheduleWindow]:
    return [ScheduleWindow.from_wire(item) for item in text.split(",") if item]


def format_schedule(windows: List[ScheduleWindow]) -> str:
    return ",".join(window.to_wire() for window in windows) or ALWAYS_ON


class AcquisitionResponsibility(str, Enum):
    PUSH = "push"
    PULL = "pull"


class AcquisitionFrequency(str, Enum):
    INSTANT = "instant"
    INTERVAL = "interval"


class SensorMode(str, Enum):
    ACTIVE = "active"
    SLEEP = "sleep"


class Credentials(Record):
    host: str
    port: int = Field(ge=0, le=65535)
    token: str


class SensingStrategy(Record):
    """The reasoned per-sensor plan pushed during configuration."""
    sampling_s: float = Field(gt=0)
    schedule: List[ScheduleWindow] = Field(default_factory=lambda: parse_schedule(ALWAYS_ON))
    commfreq_s: float = Field(gt=0)
    acq_resp: AcquisitionResponsibility = AcquisitionResponsibility.PUSH
    acq_freq: AcquisitionFrequency = AcquisitionFrequency.INTERVAL
    mode: SensorMode = SensorMode.ACTIVE
    credentials: Optional[Credentials] = None

    @model_validator(mode="after")
    def _batching(self) -> "SensingStrategy":
        if self.commfreq_s < self.sampling_s:
            raise ValueError(
                f"communication frequency {self.commfreq_s}s is faster than sampling {self.sampling_s}s")
        return self

    def is_feasible_for(self, profile: SensorProfile) -> bool:
        if self.mode == SensorMode.SLEEP:
            return True
        return profile.sampling_range.contains(self.sampling_s)

    def to_params(self) -> Dict[str, str]:
        """Render the strategy as interpreter parameters (one per config field)."""
        params = {
            "sampling": format_seconds(self.sampling_s),
            "commfreq": format_seconds(self.commfreq_s),
            "schedule": format_schedule(self.schedule),
            "acq_resp": self.acq_resp.value,
            "acq_freq": self.acq_freq.value,
            "mode": self.mode.value,
        }
        if self.credentials is not None:
            params.update(host=self.credentials.host,
                          port=str(self.credentials.port),
                          token=self.credentials.token)
        return params


class CatalogEntry(Record):
    """A known sensor model and the plugin that speaks its dialect."""
    model: str = Field(min_length=1)
    manufacturer: str = Field(min_length=1)
    plugin_id: str = Field(min_length=1)
    capabilities: List[str] = Field(default_factory=list)


class IdentificationStatus(str, Enum):
    KNOWN = "known"
    UNKNOWN = "unknown"


class IdentificationResult(Record):
    status: IdentificationStatus
    plugin_id: Optional[str] = None
    plugin_digest: Optional[str] = None
    capabilities: List[str] = Field(default_factory=list)

    @property
    def known(self) -> bool:
        return self.status == IdentificationStatus.KNOWN


class RegistrationStatus(str, Enum):
    REGISTERED = "registered"
    CONFIGURED = "configured"
    STALE = "stale"


class RegistrationRecord(Record):
    """The registry's live record of one sensor."""
    profile: SensorProfile
    registered_at: datetime
    strategy: Optional[SensingStrategy] = None
    status: RegistrationStatus = RegistrationStatus.REGISTERED

    @property
    def uid(self) -> str:
        return self.profile.identity.uid
