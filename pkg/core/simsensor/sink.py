"""
Data endpoint stand-in: collects the proof samples sensors send after joining.
"""
import asyncio
import logging
from typing import List, Optional

from core.wire import DecodeError, Listener, Message, Session, TransportKind, TransportProfile, open_listener
from core.wire.transport import ConnectionClosed, Timeout

logger = logging.getLogger(__name__)


class SampleSink:
    """TCP listener that records every SAMPLE frame it receives."""

    def __init__(self) -> None:
        self.samples: List[Message] = []
        self._listener: Optional[Listener] = None
        self._arrived = asyncio.Condition()

    @property
    def address(self):
        if self._listener is None:
            raise RuntimeError("sink is not started")
        return self._listener.address

    async def start(self, host: str = "127.0.0.1", port: int = 0) -> "SampleSink":
        profile = TransportProfile.for_kind(TransportKind.TCP)
        self._listener = await open_listener(profile, (host, port), self._collect)
        return self

    async def stop(self) -> None:
        if self._listener is not None:
            await self._listener.close()
            self._listener = None

    async def _collect(self, session: Session) -> None:
        while True:
            try:
                msg = await session.receive(timeout=10.0)
            except (ConnectionClosed, DecodeError, Timeout):
                return
            if msg.verb != "SAMPLE":
                logger.debug(f"Sink ignores {msg.verb} from {session.peer_label}")
                continue
            logger.info(f"Sample from {msg.get('uid')}: {msg.get('phenomenon')}={msg.get('value')}")
            async with self._arrived:
                self.samples.append(msg)
                self._arrived.notify_all()

    def samples_from(self, uid: str) -> List[Message]:
        return [msg for msg in self.samples if msg.get("uid") == uid]

    async def wait_for(self, uid: str, timeout: float = 5.0) -> Message:
        """
        Wait until a sample from ``uid`` has arrived.

        Raises:
            asyncio.TimeoutError: If none arrives in time
        """
        async def arrived() -> Message:
            async with self._arrived:
                await self._arrived.wait_for(lambda: bool(self.samples_from(uid)))
                return self.samples_from(uid)[0]

        return await asyncio.wait_for(arrived(), timeout)
