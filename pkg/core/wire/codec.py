"""
Line-oriented message grammar shared by the gateway and the sensors.

A frame is ``VERB|k1=v1|k2=v2\\n``. Values are UTF-8 with ``%``, ``|``, ``=`` and
newline percent-escaped. Frames are capped at MAX_FRAME bytes.
"""
import re
import logging
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, field_validator

logger = logging.getLogger(__name__)

MAX_FRAME = 4096
VERB_PATTERN = re.compile(r"^[A-Z][A-Z0-9_]{0,15}$")
KEY_PATTERN = re.compile(rb"^[a-z][a-z0-9_]{0,31}$")

_ESCAPES = [(b"%", b"%25"), (b"|", b"%7C"), (b"\n", b"%0A"), (b"=", b"%3D")]
_ESCAPE_PATTERN = re.compile(rb"%([0-9A-Fa-f]{2})")


class WireError(Exception):
    """Base exception for wire-level errors."""
    pass


class EncodeError(WireError):
    """Raised when a message cannot be rendered as a frame."""
    pass


class DecodeError(WireError):
    """Raised when bytes are not a valid frame. ``reason`` is malformed, duplicate-key or oversize."""

    MALFORMED = "malformed"
    DUPLICATE_KEY = "duplicate-key"
    OVERSIZE = "oversize"

    def __init__(self, reason: str, position: int, detail: str = ""):
        super().__init__(f"{reason} frame at byte {position}" + (f": {detail}" if detail else ""))
        self.reason = reason
        self.position = position


class Message(BaseModel):
    """A verb plus ordered key=value arguments."""
    model_config = ConfigDict(frozen=True)

    verb: str
    args: Tuple[Tuple[str, str], ...] = ()

    @field_validator("verb")
    @classmethod
    def _verb_token(cls, value: str) -> str:
        if not VERB_PATTERN.match(value):
            raise ValueError(f"verb must be 1-16 uppercase ASCII characters, got {value!r}")
        return value

    @field_validator("args")
    @classmethod
    def _unique_keys(cls, value: Tuple[Tuple[str, str], ...]) -> Tuple[Tuple[str, str], ...]:
        seen = set()
        for key, _ in value:
            if not KEY_PATTERN.match(key.encode("ascii", "replace")):
                raise ValueError(f"argument key must be a lowercase ASCII token, got {key!r}")
            if key in seen:
                raise ValueError(f"duplicate argument key {key!r}")
            seen.add(key)
        return value

    @classmethod
    def of(cls, verb: str, **args: object) -> "Message":
        """Build a message from keyword arguments, preserving their order."""
        return cls(verb=verb, args=tuple((key, str(value)) for key, value in args.items()))

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        for name, value in self.args:
            if name == key:
                return value
        return default

    def keys(self) -> List[str]:
        return [key for key, _ in self.args]

    def as_dict(self) -> Dict[str, str]:
        return dict(self.args)

    def __str__(self) -> str:
        return encode(self).decode("utf-8", "replace").rstrip("\n")


def _escape(value: str) -> bytes:
    try:
        raw = value.encode("utf-8")
    except UnicodeEncodeError as e:
        raise EncodeError(f"value {value!r} is not encodable as UTF-8: {e}")
    if b"\x00" in raw:
        raise EncodeError(f"value {value!r} contains a NUL byte")
    for plain, escaped in _ESCAPES:
        raw = raw.replace(plain, escaped)
    return raw


def _unescape(raw: bytes, position: int) -> str:
    if b"%" in _ESCAPE_PATTERN.sub(b"", raw):
        raise DecodeError(DecodeError.MALFORMED, position, "bad percent escape")
    try:
        return _ESCAPE_PATTERN.sub(lambda m: bytes([int(m.group(1), 16)]), raw).decode("utf-8")
    except UnicodeDecodeError as e:
        raise DecodeError(DecodeError.MALFORMED, position, f"value is not UTF-8: {e.reason}")


def encode(msg: Message) -> bytes:
    """
    Render a message in its canonical wire form.

    Raises:
        EncodeError: If a value holds an unescapable byte or the frame exceeds MAX_FRAME
    """
    parts = [msg.verb.encode("ascii")]
    for key, value in msg.args:
        parts.append(key.encode("ascii") + b"=" + _escape(value))
    frame = b"|".join(parts) + b"\n"
    if len(frame) > MAX_FRAME:
        raise EncodeError(f"frame of {len(frame)} bytes exceeds {MAX_FRAME}")
    return frame


def decode(data: bytes) -> Message:
    """
    Parse one newline-terminated frame.

    Raises:
        DecodeError: malformed, duplicate-key or oversize, naming the byte offset
    """
    if len(data) > MAX_FRAME:
        raise DecodeError(DecodeError.OVERSIZE, MAX_FRAME, f"{len(data)} bytes")
    if not data.endswith(b"\n"):
        raise DecodeError(DecodeError.MALFORMED, len(data), "missing newline terminator")

    body = data[:-1]
    newline = body.find(b"\n")
    if newline != -1:
        raise DecodeError(DecodeError.MALFORMED, newline, "embedded newline")

    fields = body.split(b"|")
    verb = fields[0].decode("ascii", "replace")
    if not VERB_PATTERN.match(verb):
        raise DecodeError(DecodeError.MALFORMED, 0, f"bad verb {verb!r}")

    args: List[Tuple[str, str]] = []
    seen = set()
    position = len(fields[0]) + 1
    for field in fields[1:]:
        key, sep, raw_value = field.partition(b"=")
        if not sep or not KEY_PATTERN.match(key):
            raise DecodeError(DecodeError.MALFORMED, position, f"bad argument {field!r}")
        if b"=" in raw_value:
            raise DecodeError(DecodeError.MALFORMED, position + len(key) + 1, "unescaped '=' in value")
        name = key.decode("ascii")
        if name in seen:
            raise DecodeError(DecodeError.DUPLICATE_KEY, position, f"key {name!r} repeated")
        seen.add(name)
        args.append((name, _unescape(raw_value, position + len(key) + 1)))
        position += len(field) + 1

    return Message(verb=verb, args=tuple(args))
