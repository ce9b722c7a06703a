"""
Declarative plugin descriptors.

A descriptor binds the seven canonical configuration operations to one sensor
model's concrete message dialect. Documents look like::

    id = "libelium.wasptemp3.v1"
    model = "WaspTemp3"
    manufacturer = "libelium"
    schema = 1

    [seq.handshake]
    step = { send = "HELLO", expect = "OLLEH", timeout_ms = 2000, retries = 1 }

Each ``step`` line is an inline table; steps run in document order.
"""
import re
import hashlib
import logging
import tomllib
from enum import Enum
from typing import Dict, Iterable, List, Optional, Set, Tuple

from pydantic import Field, ValidationError as PydanticValidationError

from core.models import CONFIG_FIELDS, Record, SensorIdentity
from core.wire.codec import DecodeError, Message, decode

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def content_digest(document: bytes) -> str:
    """sha256 hex digest of a descriptor document, exactly as stored."""
    return hashlib.sha256(document).hexdigest()


WILDCARD = "*"
DEFAULT_TIMEOUT_MS = 2000
DEFAULT_RETRIES = 1

PLACEHOLDER = re.compile(r"\$\{([a-z][a-z0-9_]*)\}")
SECTION = re.compile(r"^\[seq\.([a-z_]+)\]$")

# Parameters the pipeline binds before running any script
PIPELINE_PARAMS: Set[str] = {"uid", *CONFIG_FIELDS}

# Canonical capture names a retrieve_profile script must produce
PROFILE_CAPTURES = ["caps", "smin", "smax", "sched", "transports", "epc"]


class CanonicalOp(str, Enum):
    HANDSHAKE = "handshake"
    RETRIEVE_PROFILE = "retrieve_profile"
    SET_SAMPLING = "set_sampling"
    SET_SCHEDULE = "set_schedule"
    SET_COMMFREQ = "set_commfreq"
    SET_NETWORK = "set_network"
    FINALIZE = "finalize"


# Order in which the pipeline runs the scripts; captures accumulate along it
CANONICAL_ORDER: List[CanonicalOp] = [
    CanonicalOp.HANDSHAKE,
    CanonicalOp.RETRIEVE_PROFILE,
    CanonicalOp.SET_SAMPLING,
    CanonicalOp.SET_COMMFREQ,
    CanonicalOp.SET_SCHEDULE,
    CanonicalOp.SET_NETWORK,
    CanonicalOp.FINALIZE,
]


class PluginError(Exception):
    """Base exception for plugin errors."""
    pass


class ParseError(PluginError):
    """The document is not a well-formed descriptor."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(PluginError):
    """The document parses but breaks a descriptor invariant."""

    MISSING_OP = "missing-op"
    UNBOUND_CAPTURE = "unbound-capture"
    DUPLICATE_OP = "duplicate-op"
    HEADER = "header"

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


def placeholders(value: str) -> List[str]:
    return PLACEHOLDER.findall(value)


def whole_placeholder(value: str) -> Optional[str]:
    """Return the name if the value is exactly one ``${name}``."""
    match = PLACEHOLDER.fullmatch(value)
    return match.group(1) if match else None


class SequenceStep(Record):
    """One send-then-expect exchange."""
    send: Message
    expect: Message
    timeout_ms: int = Field(default=DEFAULT_TIMEOUT_MS, gt=0)
    retries: int = Field(default=DEFAULT_RETRIES, ge=0)
    capture: Tuple[str, ...] = ()

    @property
    def expect_verb(self) -> str:
        return self.expect.verb

    @property
    def expect_args(self) -> Tuple[Tuple[str, str], ...]:
        return self.expect.args

    def referenced(self) -> Set[str]:
        """Names the send template needs bound."""
        names: Set[str] = set()
        for _, value in self.send.args:
            names.update(placeholders(value))
        return names

    def produced(self, bound: Set[str]) -> Set[str]:
        """Names this step captures, given what is already bound."""
        names = set(self.capture)
        for _, value in self.expect.args:
            name = whole_placeholder(value)
            if name and name not in bound:
                names.add(name)
        return names

    def render(self, bound: Dict[str, str]) -> Message:
        """Substitute placeholders in the send template."""
        args = tuple((key, PLACEHOLDER.sub(lambda m: bound[m.group(1)], value)) for key, value in self.send.args)
        return Message(verb=self.send.verb, args=args)


class SequenceScript(Record):
    steps: Tuple[SequenceStep, ...] = Field(min_length=1)


class PluginDescriptor(Record):
    """An immutable, validated plugin."""
    plugin_id: str = Field(min_length=1)
    model: str = Field(min_length=1)
    manufacturer: str = Field(min_length=1)
    schema_version: int = SCHEMA_VERSION
    sequences: Dict[CanonicalOp, SequenceScript]

    @property
    def match_key(self) -> Tuple[str, str]:
        return (self.model, self.manufacturer)

    def script(self, op: CanonicalOp) -> SequenceScript:
        return self.sequences[op]

    def send_verbs(self) -> Set[str]:
        return {step.send.verb for script in self.sequences.values() for step in script.steps}


def _parse_template(text: str, line: int) -> Message:
    try:
        return decode((text + "\n").encode("utf-8"))
    except DecodeError as e:
        raise ParseError(f"bad message template {text!r}: {e}", line)
    except PydanticValidationError as e:
        raise ParseError(f"bad message template {text!r}: {e.errors()[0]['msg']}", line)


def _parse_step(table: dict, line: int) -> SequenceStep:
    unknown = set(table) - {"send", "expect", "timeout_ms", "retries", "capture"}
    if unknown:
        raise ParseError(f"unknown step fields {sorted(unknown)}", line)
    if "send" not in table or "expect" not in table:
        raise ParseError("step needs both 'send' and 'expect'", line)
    try:
        return SequenceStep(
            send=_parse_template(str(table["send"]), line),
            expect=_parse_template(str(table["expect"]), line),
            timeout_ms=table.get("timeout_ms", DEFAULT_TIMEOUT_MS),
            retries=table.get("retries", DEFAULT_RETRIES),
            capture=tuple(table.get("capture", ())),
        )
    except PydanticValidationError as e:
        raise ParseError(f"invalid step: {e.errors()[0]['msg']}", line)


def _check_bindings(sequences: Dict[CanonicalOp, SequenceScript]) -> None:
    bound = set(PIPELINE_PARAMS)
    for op in CANONICAL_ORDER:
        for index, step in enumerate(sequences[op].steps, start=1):
            missing = step.referenced() - bound
            if missing:
                raise ValidationError(
                    ValidationError.UNBOUND_CAPTURE,
                    f"{op.value} step {index} references unbound {sorted(missing)}")
            bound |= step.produced(bound)


def parse_descriptor(text: str) -> PluginDescriptor:
    """
    Parse and validate a plugin document.

    Raises:
        ParseError: With the offending line number
        ValidationError: missing-op, unbound-capture, duplicate-op or header
    """
    header: Dict[str, object] = {}
    steps: Dict[CanonicalOp, List[SequenceStep]] = {}
    current: Optional[CanonicalOp] = None

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue

        section = SECTION.match(line)
        if section:
            try:
                current = CanonicalOp(section.group(1))
            except ValueError:
                raise ParseError(f"unknown canonical operation {section.group(1)!r}", number)
            if current in steps:
                raise ValidationError(ValidationError.DUPLICATE_OP, f"{current.value} defined twice")
            steps[current] = []
            continue
        if line.startswith("["):
            raise ParseError(f"unexpected section header {line!r}", number)

        try:
            entry = tomllib.loads(line)
        except tomllib.TOMLDecodeError as e:
            raise ParseError(f"cannot parse {line!r}: {e}", number)

        if current is None:
            header.update(entry)
            continue
        if set(entry) != {"step"} or not isinstance(entry["step"], dict):
            raise ParseError("only 'step = { ... }' entries are allowed inside a sequence", number)
        steps[current].append(_parse_step(entry["step"], number))

    for key in ("id", "model", "manufacturer", "schema"):
        if key not in header:
            raise ValidationError(ValidationError.HEADER, f"header field {key!r} is missing")
    if header["schema"] != SCHEMA_VERSION:
        raise ValidationError(ValidationError.HEADER, f"unsupported schema {header['schema']!r}")

    missing = [op.value for op in CANONICAL_ORDER if op not in steps]
    if missing:
        raise ValidationError(ValidationError.MISSING_OP, f"no sequence for {missing}")
    empty = [op.value for op, script in steps.items() if not script]
    if empty:
        raise ValidationError(ValidationError.MISSING_OP, f"empty sequence for {empty}")

    sequences = {op: SequenceScript(steps=tuple(script)) for op, script in steps.items()}
    _check_bindings(sequences)

    descriptor = PluginDescriptor(
        plugin_id=str(header["id"]),
        model=str(header["model"]),
        manufacturer=str(header["manufacturer"]),
        schema_version=SCHEMA_VERSION,
        sequences=sequences,
    )
    logger.debug(f"Parsed plugin descriptor {descriptor.plugin_id}")
    return descriptor


def match_plugin(identity: SensorIdentity, installed: Iterable[PluginDescriptor]) -> Optional[PluginDescriptor]:
    """
    Pick the plugin for a sensor: exact (model, manufacturer), else a
    manufacturer-wide wildcard, else None. Independent of installation order.
    """
    exact: List[PluginDescriptor] = []
    wildcard: List[PluginDescriptor] = []
    for descriptor in installed:
        if descriptor.manufacturer != identity.manufacturer:
            continue
        if descriptor.model == identity.model:
            exact.append(descriptor)
        elif descriptor.model == WILDCARD:
            wildcard.append(descriptor)
    for candidates in (exact, wildcard):
        if candidates:
            return min(candidates, key=lambda d: d.plugin_id)
    return None
