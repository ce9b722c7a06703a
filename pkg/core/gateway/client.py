"""
Registry client used by the gateway. Safe for concurrent use by pipeline workers.
"""
import asyncio
import logging
from typing import Dict, Optional, Tuple

import httpx

from core.models import (
    Credentials,
    IdentificationResult,
    RegistrationRecord,
    SensingStrategy,
    SensorIdentity,
    SensorProfile,
)

logger = logging.getLogger(__name__)

DIGEST_HEADER = "X-Content-Digest"


class GatewayError(Exception):
    """Base exception for gateway errors."""
    pass


class RegistryUnreachable(GatewayError):
    """The registry did not answer after every attempt."""

    def __init__(self, path: str, attempts: int, cause: Exception):
        super().__init__(f"registry unreachable for {path} after {attempts} attempts: {cause}")
        self.path = path
        self.attempts = attempts


class RegistryRejected(GatewayError):
    """The registry answered with an error status."""

    def __init__(self, path: str, status_code: int, detail: str):
        super().__init__(f"registry rejected {path} ({status_code}): {detail}")
        self.path = path
        self.status_code = status_code
        self.detail = detail


class FetchError(GatewayError):
    """A plugin could not be fetched intact."""
    pass


class StrategyInfeasible(GatewayError):
    """The strategy does not fit the sensor's profile."""
    pass


class RegistryClient:
    """
    Thin async client over the registry API.

    Transport failures and 5xx answers are retried with exponential backoff
    (backoff_s x 2^n) before RegistryUnreachable is raised.
    """

    def __init__(self, base_url: str, attempts: int = 3, backoff_s: float = 0.2, timeout_s: float = 5.0,
                 transport: Optional[httpx.AsyncBaseTransport] = None):
        self.base_url = base_url
        self.attempts = attempts
        self.backoff_s = backoff_s
        self._client = httpx.AsyncClient(base_url=base_url, timeout=timeout_s, transport=transport)

    async def close(self) -> None:
        await self._client.aclose()

    async def _request(self, method: str, path: str, **kwargs) -> httpx.Response:
        last_error: Exception = RuntimeError("no attempt made")
        for attempt in range(self.attempts):
            if attempt:
                await asyncio.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                response = await self._client.request(method, path, **kwargs)
            except httpx.TransportError as e:
                last_error = e
                logger.debug(f"Registry {method} {path} failed (attempt {attempt + 1}/{self.attempts}): {e}")
                continue
            if response.status_code >= 500:
                last_error = RuntimeError(f"HTTP {response.status_code}")
                logger.debug(f"Registry {method} {path} answered {response.status_code} "
                             f"(attempt {attempt + 1}/{self.attempts})")
                continue
            if response.status_code >= 400:
                try:
                    detail = str(response.json().get("detail", response.text))
                except ValueError:
                    detail = response.text
                raise RegistryRejected(path, response.status_code, detail)
            return response
        raise RegistryUnreachable(path, self.attempts, last_error)

    async def identify(self, identity: SensorIdentity) -> IdentificationResult:
        response = await self._request("GET", "/identify",
                                       params={"model": identity.model, "mfr": identity.manufacturer})
        return IdentificationResult.from_dict(response.json())

    async def fetch_plugin(self, plugin_id: str) -> Tuple[bytes, str]:
        """
        Raises:
            FetchError: Unknown id or missing digest header
        """
        try:
            response = await self._request("GET", f"/plugins/{plugin_id}")
        except RegistryRejected as e:
            raise FetchError(f"cannot fetch plugin {plugin_id}: {e.detail}")
        digest = response.headers.get(DIGEST_HEADER)
        if not digest:
            raise FetchError(f"plugin {plugin_id} served without {DIGEST_HEADER}")
        return response.content, digest

    async def register(self, profile: SensorProfile) -> RegistrationRecord:
        response = await self._request("POST", "/register", json=profile.to_dict())
        return RegistrationRecord.from_dict(response.json())

    async def strategy(self, uid: str, facts: Dict[str, str]) -> SensingStrategy:
        try:
            response = await self._request("POST", "/strategy", json={"uid": uid, "facts": facts})
        except RegistryRejected as e:
            if e.status_code == 409:
                raise StrategyInfeasible(e.detail)
            raise
        return SensingStrategy.from_dict(response.json())

    async def credentials(self, uid: str) -> Credentials:
        response = await self._request("POST", "/credentials", json={"uid": uid})
        return Credentials.from_dict(response.json())

    async def ping(self) -> None:
        """Raises RegistryUnreachable if the registry does not answer."""
        await self._request("GET", "/identify", params={"model": "-", "mfr": "-"})
