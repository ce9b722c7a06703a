"""
The gateway daemon: binds a listener per transport and runs one pipeline
worker per accepted session, bounded by the configured concurrency cap.
"""
import asyncio
import logging
import time
from collections import deque
from typing import Deque, Dict, List, Optional

import httpx
import uvicorn
from fastapi import FastAPI
from pydantic import BaseModel

from core.config import GatewayConfig
from core.gateway.cache import PluginCache
from core.gateway.client import RegistryClient
from core.gateway.pipeline import DiscoveryPipeline, SessionOutcome, SessionRecord
from core.wire import Listener, Session, TransportProfile, open_listener

logger = logging.getLogger(__name__)


class GatewayStatus(BaseModel):
    live: int
    completed: int
    failed: int
    aborted: int
    unknown: int
    cache_size: int
    max_concurrent_seen: int


class Gateway:
    """
    Accepts sensor sessions on every configured binding.

    Bind failures are fatal at start(); everything that goes wrong inside a
    session is counted and logged, never raised.
    """

    def __init__(self, config: GatewayConfig, client: Optional[RegistryClient] = None,
                 http_transport: Optional[httpx.AsyncBaseTransport] = None, zero_latency: bool = False):
        self.config = config
        self.client = client or RegistryClient(config.registry_url, attempts=config.registry_attempts,
                                               backoff_s=config.registry_backoff_s, transport=http_transport)
        self.cache = PluginCache()
        self.pipeline = DiscoveryPipeline(config, self.client, self.cache)
        self.zero_latency = zero_latency
        self.listeners: List[Listener] = []
        # only summaries outlive a session, newest session_history of them
        self.records: Deque[SessionRecord] = deque(maxlen=config.session_history)
        self.counts: Dict[SessionOutcome, int] = {outcome: 0 for outcome in SessionOutcome}
        self.live = 0
        self.max_concurrent_seen = 0
        self._slots = asyncio.Semaphore(config.max_sessions)
        self._finished = asyncio.Condition()

    @property
    def addresses(self) -> Dict[str, tuple]:
        return {listener.profile.kind.value: listener.address for listener in self.listeners}

    async def start(self) -> None:
        """
        Raises:
            BindError: A binding could not be opened (listeners already opened are closed)
        """
        try:
            for binding in self.config.listeners:
                profile = TransportProfile.for_kind(binding.kind, zero_latency=self.zero_latency)
                listener = await open_listener(profile, (binding.host, binding.port), self._handle)
                self.listeners.append(listener)
        except Exception:
            await self.stop()
            raise
        logger.info(f"Gateway serving {len(self.listeners)} transports, "
                    f"at most {self.config.max_sessions} sessions at once")

    async def stop(self) -> None:
        for listener in self.listeners:
            await listener.close()
        self.listeners = []
        await self.client.close()

    async def _handle(self, session: Session) -> None:
        async with self._slots:
            self.live += 1
            self.max_concurrent_seen = max(self.max_concurrent_seen, self.live)
            try:
                ds = await self.pipeline.run(session, slot_at=time.monotonic())
            finally:
                self.live -= 1
        self.counts[ds.outcome] += 1
        if ds.outcome == SessionOutcome.COMPLETED:
            self.records.append(ds.to_record())
        async with self._finished:
            self._finished.notify_all()

    async def wait_for_completed(self, count: int, timeout: float) -> bool:
        """Wait until at least ``count`` sessions have completed; False on timeout."""
        async def reached() -> None:
            async with self._finished:
                await self._finished.wait_for(lambda: self.counts[SessionOutcome.COMPLETED] >= count)

        try:
            await asyncio.wait_for(reached(), timeout)
            return True
        except asyncio.TimeoutError:
            return False

    def status(self) -> GatewayStatus:
        return GatewayStatus(
            live=self.live,
            completed=self.counts[SessionOutcome.COMPLETED],
            failed=self.counts[SessionOutcome.FAILED],
            aborted=self.counts[SessionOutcome.ABORTED],
            unknown=self.counts[SessionOutcome.UNKNOWN],
            cache_size=len(self.cache),
            max_concurrent_seen=self.max_concurrent_seen,
        )

    def session_records(self) -> List[SessionRecord]:
        return list(self.records)

    def create_status_app(self) -> FastAPI:
        app = FastAPI(title="caddot gateway")

        @app.get("/status", response_model=GatewayStatus)
        async def status() -> GatewayStatus:
            return self.status()

        @app.get("/sessions", response_model=List[SessionRecord])
        async def sessions() -> List[SessionRecord]:
            return self.session_records()

        return app

    async def run(self) -> None:
        """
        Serve until cancelled. Checks the registry first so an absent registry
        fails fast with RegistryUnreachable.
        """
        try:
            await self.client.ping()
            await self.start()
            server = uvicorn.Server(uvicorn.Config(self.create_status_app(), host=self.config.status_host,
                                                   port=self.config.status_port, log_level="warning"))
            await server.serve()
        finally:
            await self.stop()
