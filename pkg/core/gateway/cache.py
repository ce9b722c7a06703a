"""
Gateway-side plugin cache, keyed by plugin id.
"""
import asyncio
import logging
from typing import Dict, List, Optional

from core.gateway.client import FetchError, RegistryClient
from core.plugin import ParseError, PluginDescriptor, content_digest, parse_descriptor

logger = logging.getLogger(__name__)


class IntegrityError(FetchError):
    """The fetched bytes do not match the published digest."""

    def __init__(self, plugin_id: str, detail: str):
        super().__init__(f"plugin {plugin_id} failed verification: {detail}")
        self.plugin_id = plugin_id


class PluginCache:
    """
    Installed plugins. Reads are concurrent; first fetches of one id are
    coalesced so a model's plugin is downloaded once.
    """

    def __init__(self) -> None:
        self._plugins: Dict[str, PluginDescriptor] = {}
        self._digests: Dict[str, str] = {}
        self._locks: Dict[str, asyncio.Lock] = {}
        self.fetches = 0

    def __len__(self) -> int:
        return len(self._plugins)

    def __contains__(self, plugin_id: str) -> bool:
        return plugin_id in self._plugins

    def installed(self) -> List[PluginDescriptor]:
        return list(self._plugins.values())

    def get(self, plugin_id: str) -> Optional[PluginDescriptor]:
        return self._plugins.get(plugin_id)

    def evict(self, plugin_id: str) -> None:
        self._digests.pop(plugin_id, None)
        if self._plugins.pop(plugin_id, None) is not None:
            logger.info(f"Evicted plugin {plugin_id}")

    async def acquire(self, plugin_id: str, expected_digest: Optional[str], client: RegistryClient) -> PluginDescriptor:
        """
        Return the installed plugin, fetching and verifying it on first use.
        A plugin republished under a new digest is fetched again and replaces
        the installed one.

        Raises:
            FetchError: Unknown plugin or digest mismatch
            ParseError, ValidationError: Corrupt descriptor (nothing is cached)
        """
        cached = self._current(plugin_id, expected_digest)
        if cached is not None:
            return cached

        lock = self._locks.setdefault(plugin_id, asyncio.Lock())
        async with lock:
            cached = self._current(plugin_id, expected_digest)
            if cached is not None:
                return cached

            body, served_digest = await client.fetch_plugin(plugin_id)
            self.fetches += 1
            actual = content_digest(body)
            if actual != served_digest:
                raise IntegrityError(plugin_id, "body does not match the served digest")
            if expected_digest and actual != expected_digest:
                raise IntegrityError(plugin_id, "body does not match the published digest")
            try:
                text = body.decode("utf-8")
            except UnicodeDecodeError as e:
                raise ParseError(f"descriptor is not UTF-8: {e.reason}", 0)

            descriptor = parse_descriptor(text)
            if descriptor.plugin_id != plugin_id:
                raise FetchError(f"asked for plugin {plugin_id}, got {descriptor.plugin_id}")
            replaced = plugin_id in self._plugins
            self._plugins[plugin_id] = descriptor
            self._digests[plugin_id] = actual
            logger.info(f"{'Replaced' if replaced else 'Installed'} plugin {plugin_id}")
            return descriptor

    def _current(self, plugin_id: str, expected_digest: Optional[str]) -> Optional[PluginDescriptor]:
        cached = self._plugins.get(plugin_id)
        if cached is None or (expected_digest and self._digests[plugin_id] != expected_digest):
            return None
        return cached
