"""
Wire protocol: message codec and transports shared by the gateway and the sensors.
"""
from core.wire.codec import (
    MAX_FRAME,
    Message,
    WireError,
    EncodeError,
    DecodeError,
    encode,
    decode,
)
from core.wire.transport import (
    TransportKind,
    TransportProfile,
    Session,
    Listener,
    LogEntry,
    BindError,
    AcceptError,
    Timeout,
    ConnectionClosed,
    open_listener,
    open_connection,
)
