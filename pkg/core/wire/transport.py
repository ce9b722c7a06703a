"""
Transport abstraction: TCP stream sessions, UDP datagram sessions and the
latency-shaped bt-sim profile, on both the listening and the connecting side.
"""
import asyncio
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Awaitable, Callable, Dict, List, Optional, Set, Tuple

from pydantic import BaseModel, ConfigDict, Field

from core.wire.codec import MAX_FRAME, DecodeError, Message, WireError, decode, encode

logger = logging.getLogger(__name__)

Address = Tuple[str, int]
SessionHandler = Callable[["Session"], Awaitable[None]]

# Transport-level verbs a datagram peer uses to open and close its logical session
ATTACH = "ATTACH"
DETACH = "DETACH"

DEFAULT_TIMEOUT_S = 2.0
UDP_RETRIES = 2


class BindError(WireError):
    """Raised when a listener cannot bind its address."""
    pass


class AcceptError(WireError):
    """A single inbound connection failed; the listener keeps running."""
    pass


class Timeout(WireError):
    """No reply arrived within the per-message timeout."""
    pass


class ConnectionClosed(WireError):
    """The peer went away or the session was closed locally."""
    pass


class TransportKind(str, Enum):
    TCP = "tcp"
    UDP = "udp"
    BT_SIM = "bt-sim"


class TransportProfile(BaseModel):
    """A transport kind plus the latencies injected on gateway-side sessions."""
    model_config = ConfigDict(frozen=True)

    kind: TransportKind
    message_latency_s: float = Field(default=0.0, ge=0)
    setup_latency_s: float = Field(default=0.0, ge=0)

    @classmethod
    def for_kind(cls, kind: TransportKind, zero_latency: bool = False) -> "TransportProfile":
        """Default profile for a kind; bt-sim models Bluetooth's slower link (600 ms setup, 30 ms per message)."""
        kind = TransportKind(kind)
        if kind == TransportKind.BT_SIM and not zero_latency:
            return cls(kind=kind, message_latency_s=0.030, setup_latency_s=0.600)
        return cls(kind=kind)

    @property
    def is_stream(self) -> bool:
        return self.kind in (TransportKind.TCP, TransportKind.BT_SIM)


@dataclass
class LogEntry:
    direction: str  # "out" or "in"
    message: Message
    at: float


class Session:
    """
    One logical conversation with a peer.

    Gateway-side sessions inject the profile's per-message latency on every send
    and every delivery. A session is used by one worker at a time.
    """

    retries = 0

    def __init__(self, peer: Address, profile: TransportProfile,
                 timeout_s: float = DEFAULT_TIMEOUT_S, inject_latency: bool = True):
        self.peer = peer
        self.profile = profile
        self.timeout_s = timeout_s
        self.inject_latency = inject_latency
        self.log: List[LogEntry] = []
        self.accepted_at = time.monotonic()
        self.ready_at = self.accepted_at
        self.closed = False

    @property
    def peer_label(self) -> str:
        return f"{self.profile.kind.value}://{self.peer[0]}:{self.peer[1]}"

    async def _write(self, frame: bytes) -> None:
        raise NotImplementedError("Sessions must implement _write")

    async def _read_frame(self) -> bytes:
        raise NotImplementedError("Sessions must implement _read_frame")

    def _discard_stale(self) -> None:
        """Drop frames that arrived before a request was sent (datagram sessions only)."""

    async def send(self, msg: Message) -> None:
        if self.closed:
            raise ConnectionClosed(f"session to {self.peer_label} is closed")
        frame = encode(msg)
        if self.inject_latency and self.profile.message_latency_s:
            await asyncio.sleep(self.profile.message_latency_s)
        await self._write(frame)
        self.log.append(LogEntry("out", msg, time.monotonic()))
        logger.trace(f"{self.peer_label} << {frame!r}")

    async def receive(self, timeout: Optional[float] = None) -> Message:
        if self.closed:
            raise ConnectionClosed(f"session to {self.peer_label} is closed")
        timeout = self.timeout_s if timeout is None else timeout
        try:
            frame = await asyncio.wait_for(self._read_frame(), timeout)
        except asyncio.TimeoutError:
            raise Timeout(f"no frame from {self.peer_label} within {timeout:.3f}s")
        if self.inject_latency and self.profile.message_latency_s:
            await asyncio.sleep(self.profile.message_latency_s)
        msg = decode(frame)
        self.log.append(LogEntry("in", msg, time.monotonic()))
        logger.trace(f"{self.peer_label} >> {frame!r}")
        return msg

    async def request(self, msg: Message, timeout: Optional[float] = None,
                      retries: Optional[int] = None) -> Message:
        """
        Send a message and return the next inbound one.

        Datagram sessions resend up to UDP_RETRIES times before surfacing Timeout,
        unless ``retries`` says otherwise.

        Raises:
            Timeout: If no reply arrives
            ConnectionClosed: If the session is (or becomes) closed
        """
        retries = self.retries if retries is None else retries
        attempts = retries + 1
        for attempt in range(attempts):
            self._discard_stale()
            await self.send(msg)
            try:
                return await self.receive(timeout)
            except Timeout:
                if attempt + 1 >= attempts:
                    raise
                logger.debug(f"Retrying {msg.verb} to {self.peer_label} ({attempt + 1}/{retries})")
        raise Timeout(f"no reply from {self.peer_label}")  # pragma: no cover

    async def close(self) -> None:
        self.closed = True


class StreamSession(Session):
    """TCP (and bt-sim) session over asyncio streams."""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter,
                 profile: TransportProfile, timeout_s: float = DEFAULT_TIMEOUT_S,
                 inject_latency: bool = True):
        peer = writer.get_extra_info("peername") or ("?", 0)
        super().__init__((peer[0], peer[1]), profile, timeout_s, inject_latency)
        self._reader = reader
        self._writer = writer

    async def _write(self, frame: bytes) -> None:
        if self._writer.is_closing():
            self.closed = True
            raise ConnectionClosed(f"session to {self.peer_label} is closed")
        try:
            self._writer.write(frame)
            await self._writer.drain()
        except (ConnectionError, OSError) as e:
            self.closed = True
            raise ConnectionClosed(f"write to {self.peer_label} failed: {e}")

    async def _read_frame(self) -> bytes:
        try:
            return await self._reader.readuntil(b"\n")
        except asyncio.IncompleteReadError:
            self.closed = True
            raise ConnectionClosed(f"{self.peer_label} closed the connection")
        except asyncio.LimitOverrunError:
            self.closed = True
            self._writer.close()
            raise DecodeError(DecodeError.OVERSIZE, MAX_FRAME, "no terminator within frame cap")
        except (ConnectionError, OSError) as e:
            self.closed = True
            raise ConnectionClosed(f"read from {self.peer_label} failed: {e}")

    async def close(self) -> None:
        if not self.closed or not self._writer.is_closing():
            self._writer.close()
            try:
                await self._writer.wait_closed()
            except (ConnectionError, OSError):
                pass
        self.closed = True


class DatagramSession(Session):
    """Logical UDP session keyed by peer address."""

    retries = UDP_RETRIES

    def __init__(self, transport: asyncio.DatagramTransport, peer: Address,
                 profile: TransportProfile, timeout_s: float = DEFAULT_TIMEOUT_S,
                 inject_latency: bool = True, connected: bool = False,
                 on_close: Optional[Callable[["DatagramSession"], None]] = None):
        super().__init__(peer, profile, timeout_s, inject_latency)
        self._transport = transport
        self._connected = connected
        self._inbox: "asyncio.Queue[Optional[bytes]]" = asyncio.Queue()
        self._on_close = on_close

    def feed(self, data: Optional[bytes]) -> None:
        self._inbox.put_nowait(data)

    def _discard_stale(self) -> None:
        while not self._inbox.empty():
            stale = self._inbox.get_nowait()
            if stale is None:
                self._inbox.put_nowait(None)
                return
            logger.debug(f"Discarding stale datagram from {self.peer_label}: {stale!r}")

    async def _write(self, frame: bytes) -> None:
        if self._transport.is_closing():
            self.closed = True
            raise ConnectionClosed(f"session to {self.peer_label} is closed")
        if self._connected:
            self._transport.sendto(frame)
        else:
            self._transport.sendto(frame, self.peer)

    async def _read_frame(self) -> bytes:
        data = await self._inbox.get()
        if data is None:
            self.closed = True
            raise ConnectionClosed(f"{self.peer_label} detached")
        return data

    async def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        # Either side tells its peer the logical session is over
        if not self._transport.is_closing():
            try:
                if self._connected:
                    self._transport.sendto(encode(Message(verb=DETACH)))
                else:
                    self._transport.sendto(encode(Message(verb=DETACH)), self.peer)
            except OSError:
                pass
        if self._connected:
            self._transport.close()
        self.feed(None)
        if self._on_close is not None:
            self._on_close(self)


class Listener:
    """Handle on a bound listener; closing it stops accepting new sessions."""

    def __init__(self, profile: TransportProfile, address: Address):
        self.profile = profile
        self.address = address
        self.accepted = 0
        self._tasks: Set[asyncio.Task] = set()

    def _track(self, task: asyncio.Task) -> None:
        self._tasks.add(task)
        task.add_done_callback(self._tasks.discard)

    async def close(self) -> None:
        for task in list(self._tasks):
            task.cancel()
        if self._tasks:
            await asyncio.gather(*self._tasks, return_exceptions=True)


async def _serve_session(listener: Listener, session: Session, handler: SessionHandler) -> None:
    """Run the handler for one session; failures are logged, never propagated to the listener."""
    listener.accepted += 1
    try:
        if listener.profile.setup_latency_s:
            await asyncio.sleep(listener.profile.setup_latency_s)
        session.ready_at = time.monotonic()
        await handler(session)
    except asyncio.CancelledError:
        raise
    except Exception as e:
        logger.warning(f"Session handler for {session.peer_label} failed: {e}")
    finally:
        await session.close()


class StreamListener(Listener):
    def __init__(self, profile: TransportProfile, address: Address, server: asyncio.AbstractServer):
        super().__init__(profile, address)
        self._server = server

    async def close(self) -> None:
        self._server.close()
        await super().close()
        await self._server.wait_closed()


class DatagramListener(Listener, asyncio.DatagramProtocol):
    """Demultiplexes datagrams by peer address into logical sessions."""

    def __init__(self, profile: TransportProfile, handler: SessionHandler, timeout_s: float):
        Listener.__init__(self, profile, ("", 0))
        self._handler = handler
        self._timeout_s = timeout_s
        self._transport: Optional[asyncio.DatagramTransport] = None
        self.sessions: Dict[Address, DatagramSession] = {}

    def connection_made(self, transport) -> None:  # type: ignore[override]
        self._transport = transport
        sockname = transport.get_extra_info("sockname")
        self.address = (sockname[0], sockname[1])

    def datagram_received(self, data: bytes, addr) -> None:  # type: ignore[override]
        peer = (addr[0], addr[1])
        session = self.sessions.get(peer)
        line = data.rstrip(b"\n")
        is_attach = line == ATTACH.encode() or line.startswith(ATTACH.encode() + b"|")
        is_detach = line == DETACH.encode()

        if session is None or session.closed:
            if is_detach:
                return
            try:
                session = DatagramSession(self._transport, peer, self.profile, self._timeout_s,
                                          on_close=self._forget)
            except Exception as e:
                logger.warning(str(AcceptError(f"could not open session for {peer}: {e}")))
                return
            self.sessions[peer] = session
            logger.debug(f"Accepted datagram session from {session.peer_label}")
            self._track(asyncio.ensure_future(_serve_session(self, session, self._handler)))

        if is_detach:
            session.feed(None)
        elif not is_attach:
            session.feed(data)

    def error_received(self, exc: Exception) -> None:
        logger.warning(f"Datagram listener on {self.address} error: {exc}")

    def _forget(self, session: DatagramSession) -> None:
        if self.sessions.get(session.peer) is session:
            del self.sessions[session.peer]

    async def close(self) -> None:
        if self._transport is not None:
            self._transport.close()
        for session in list(self.sessions.values()):
            session.feed(None)
        await super().close()


async def _open_stream_listener(profile: TransportProfile, bind: Address,
                                handler: SessionHandler, timeout_s: float) -> Listener:
    holder: Dict[str, Listener] = {}

    async def on_connect(reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        listener = holder["listener"]
        try:
            session = StreamSession(reader, writer, profile, timeout_s)
        except Exception as e:
            logger.warning(str(AcceptError(f"could not open stream session: {e}")))
            writer.close()
            return
        logger.debug(f"Accepted stream session from {session.peer_label}")
        task = asyncio.current_task()
        if task is not None:
            listener._track(task)
        await _serve_session(listener, session, handler)

    try:
        server = await asyncio.start_server(on_connect, bind[0], bind[1], limit=MAX_FRAME)
    except OSError as e:
        raise BindError(f"cannot bind {profile.kind.value} listener to {bind[0]}:{bind[1]}: {e}")
    sockname = server.sockets[0].getsockname()
    listener = StreamListener(profile, (sockname[0], sockname[1]), server)
    holder["listener"] = listener
    return listener


async def _open_datagram_listener(profile: TransportProfile, bind: Address,
                                  handler: SessionHandler, timeout_s: float) -> Listener:
    loop = asyncio.get_running_loop()
    listener = DatagramListener(profile, handler, timeout_s)
    try:
        await loop.create_datagram_endpoint(lambda: listener, local_addr=bind)
    except OSError as e:
        raise BindError(f"cannot bind udp listener to {bind[0]}:{bind[1]}: {e}")
    return listener


class _DatagramClientProtocol(asyncio.DatagramProtocol):
    def __init__(self) -> None:
        self.session: Optional[DatagramSession] = None

    def datagram_received(self, data: bytes, addr) -> None:  # type: ignore[override]
        if self.session is None:
            return
        if data.rstrip(b"\n") == DETACH.encode():
            self.session.feed(None)
        else:
            self.session.feed(data)

    def error_received(self, exc: Exception) -> None:
        logger.debug(f"Datagram client error: {exc}")
        if self.session is not None:
            self.session.feed(None)

    def connection_lost(self, exc: Optional[Exception]) -> None:
        if self.session is not None:
            self.session.feed(None)


async def _connect_stream(profile: TransportProfile, address: Address, timeout_s: float) -> Session:
    try:
        reader, writer = await asyncio.open_connection(address[0], address[1], limit=MAX_FRAME)
    except OSError as e:
        raise ConnectionClosed(f"cannot connect to {profile.kind.value}://{address[0]}:{address[1]}: {e}")
    return StreamSession(reader, writer, profile, timeout_s, inject_latency=False)


async def _connect_datagram(profile: TransportProfile, address: Address, timeout_s: float) -> Session:
    loop = asyncio.get_running_loop()
    try:
        transport, protocol = await loop.create_datagram_endpoint(_DatagramClientProtocol, remote_addr=address)
    except OSError as e:
        raise ConnectionClosed(f"cannot reach udp://{address[0]}:{address[1]}: {e}")
    session = DatagramSession(transport, address, profile, timeout_s, inject_latency=False, connected=True)
    protocol.session = session
    transport.sendto(encode(Message(verb=ATTACH)))
    return session


# Registries of listener and connector factories, keyed by transport kind
_listeners: Dict[TransportKind, Callable[..., Awaitable[Listener]]] = {}
_connectors: Dict[TransportKind, Callable[..., Awaitable[Session]]] = {}


def register_transport(kind: TransportKind, listen: Callable[..., Awaitable[Listener]],
                       connect: Callable[..., Awaitable[Session]]) -> None:
    """Register the listener and connector factories for a transport kind."""
    _listeners[kind] = listen
    _connectors[kind] = connect
    logger.debug(f"Registered transport: {kind.value}")


async def open_listener(profile: TransportProfile, bind: Address, handler: SessionHandler,
                        timeout_s: float = DEFAULT_TIMEOUT_S) -> Listener:
    """
    Bind a listener that hands every accepted session to ``handler``.

    Each session carries the profile's latencies; a failing handler or a failed
    accept is logged and does not stop the listener.

    Raises:
        BindError: If the address is unavailable
    """
    factory = _listeners.get(profile.kind)
    if factory is None:
        raise BindError(f"no transport registered for {profile.kind}")
    listener = await factory(profile, bind, handler, timeout_s)
    logger.info(f"Listening for {profile.kind.value} sessions on {listener.address[0]}:{listener.address[1]}")
    return listener


async def open_connection(profile: TransportProfile, address: Address,
                          timeout_s: float = DEFAULT_TIMEOUT_S) -> Session:
    """
    Open a client-side session to a listener (the sensor's side of the link).

    Raises:
        ConnectionClosed: If the listener cannot be reached
    """
    factory = _connectors.get(profile.kind)
    if factory is None:
        raise ConnectionClosed(f"no transport registered for {profile.kind}")
    return await factory(profile, address, timeout_s)


register_transport(TransportKind.TCP, _open_stream_listener, _connect_stream)
register_transport(TransportKind.BT_SIM, _open_stream_listener, _connect_stream)
register_transport(TransportKind.UDP, _open_datagram_listener, _connect_datagram)
