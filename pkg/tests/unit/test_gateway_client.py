"""Tests for core.gateway.client module."""
import httpx
import pytest

from core.gateway import FetchError, RegistryClient, RegistryRejected, RegistryUnreachable, StrategyInfeasible
from core.models import IdentificationStatus, SensorIdentity
from core.registry import content_digest
from tests.support import REGISTRY_URL, UID, make_profile


def client_for(handler, attempts: int = 3) -> RegistryClient:
    return RegistryClient(REGISTRY_URL, attempts=attempts, backoff_s=0, transport=httpx.MockTransport(handler))


class TestRetries:
    """Tests for retry and error mapping."""

    async def test_server_errors_are_retried(self):
        calls = []

        def handler(request):
            calls.append(request)
            if len(calls) < 3:
                return httpx.Response(503)
            return httpx.Response(200, json={"status": "unknown", "capabilities": []})

        client = client_for(handler)
        result = await client.identify(SensorIdentity(uid=UID, model="M", manufacturer="x"))
        assert result.status == IdentificationStatus.UNKNOWN
        assert len(calls) == 3
        await client.close()

    async def test_unreachable_after_all_attempts(self):
        def handler(request):
            raise httpx.ConnectError("refused", request=request)

        client = client_for(handler, attempts=2)
        with pytest.raises(RegistryUnreachable) as exc_info:
            await client.ping()
        assert exc_info.value.attempts == 2
        assert exc_info.value.path == "/identify"
        await client.close()

    async def test_client_errors_are_not_retried(self):
        calls = []

        def handler(request):
            calls.append(request)
            return httpx.Response(404, json={"detail": "unknown uid"})

        client = client_for(handler)
        with pytest.raises(RegistryRejected) as exc_info:
            await client.credentials(UID)
        assert exc_info.value.status_code == 404
        assert exc_info.value.detail == "unknown uid"
        assert len(calls) == 1
        await client.close()


class TestEndpoints:
    """Tests for the typed calls."""

    async def test_identify_sends_model_and_manufacturer(self):
        seen = {}

        def handler(request):
            seen.update(request.url.params)
            return httpx.Response(200, json={"status": "known", "plugin_id": "x.m.v1",
                                             "plugin_digest": "d", "capabilities": ["co2"]})

        client = client_for(handler)
        result = await client.identify(SensorIdentity(uid=UID, model="M", manufacturer="x"))
        assert seen == {"model": "M", "mfr": "x"}
        assert result.plugin_id == "x.m.v1"
        await client.close()

    async def test_fetch_plugin(self):
        body = b"id = \"x.m.v1\"\n"

        def handler(request):
            assert request.url.path == "/plugins/x.m.v1"
            return httpx.Response(200, content=body, headers={"X-Content-Digest": content_digest(body)})

        client = client_for(handler)
        assert await client.fetch_plugin("x.m.v1") == (body, content_digest(body))
        await client.close()

    async def test_fetch_without_digest_header(self):
        client = client_for(lambda request: httpx.Response(200, content=b"doc"))
        with pytest.raises(FetchError):
            await client.fetch_plugin("x.m.v1")
        await client.close()

    async def test_fetch_unknown_plugin(self):
        client = client_for(lambda request: httpx.Response(404, json={"detail": "no plugin"}))
        with pytest.raises(FetchError, match="no plugin"):
            await client.fetch_plugin("x.m.v1")
        await client.close()

    async def test_infeasible_strategy(self):
        client = client_for(lambda request: httpx.Response(409, json={"detail": "sampling 10 s out of range"}))
        with pytest.raises(StrategyInfeasible):
            await client.strategy(UID, {})
        await client.close()

    async def test_other_strategy_rejections_propagate(self):
        client = client_for(lambda request: httpx.Response(404, json={"detail": "unknown uid"}))
        with pytest.raises(RegistryRejected):
            await client.strategy(UID, {})
        await client.close()


class TestAgainstRegistry:
    """Round trips against the in-process registry."""

    async def test_register_and_strategy(self, registry_transport):
        client = RegistryClient(REGISTRY_URL, backoff_s=0, transport=registry_transport)
        record = await client.register(make_profile())
        assert record.profile.identity.uid == UID

        strategy = await client.strategy(UID, {"season": "summer", "time_band": "day"})
        assert strategy.sampling_s == 300

        creds = await client.credentials(UID)
        assert len(creds.token) == 32
        await client.close()
