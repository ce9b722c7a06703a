"""
Shared pytest fixtures and configuration for caddot tests.

Provides a seeded registry on a temporary store and an in-process HTTP
transport to it. Plain helpers live in tests/support.py.
"""

import pytest
from pathlib import Path

import httpx

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.config import RegistryConfig
from core.registry import RegistryService
from core.registry.api import create_app
from tests.support import REGISTRY_URL


@pytest.fixture
def registry_config(tmp_path) -> RegistryConfig:
    """Registry settings over a fresh store in the test's temporary directory."""
    return RegistryConfig(store_dir=tmp_path / "registry")


@pytest.fixture
def registry_service(registry_config) -> RegistryService:
    """A registry seeded with the shipped 52-model catalog."""
    service = RegistryService(registry_config)
    service.seed()
    return service


@pytest.fixture
def registry_transport(registry_service) -> httpx.ASGITransport:
    """In-process HTTP transport to the registry API."""
    return httpx.ASGITransport(app=create_app(registry_service))


@pytest.fixture
async def registry_http(registry_transport):
    async with httpx.AsyncClient(transport=registry_transport, base_url=REGISTRY_URL) as client:
        yield client


# Pytest configuration hooks
def pytest_collection_modifyitems(config, items):
    """Auto-mark tests based on their directory."""
    for item in items:
        rel_path = Path(item.fspath).relative_to(Path(__file__).parent)
        if "unit" in rel_path.parts:
            item.add_marker(pytest.mark.unit)
        elif "integration" in rel_path.parts:
            item.add_marker(pytest.mark.integration)
        elif "architecture" in rel_path.parts:
            item.add_marker(pytest.mark.architecture)
