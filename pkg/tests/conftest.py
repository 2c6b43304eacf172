import asyncio

import pytest
from fastapi.testclient import TestClient

from app.core.api_corpus import load_profile_file
from app.core.embeddings import HashingEmbeddingProvider
from app.core.m2m_log import M2MLog
from app.main import create_app
from app.scenarios.warehouse import build_warehouse_system


@pytest.fixture
def client():
    """Create a test client for the FastAPI app with no coordinator attached."""
    return TestClient(create_app())


@pytest.fixture
def provider():
    return HashingEmbeddingProvider()


@pytest.fixture
def robot_profile():
    return load_profile_file("robot.json")


@pytest.fixture
def wifi_sdr_profile():
    return load_profile_file("wifi_sdr.json")


@pytest.fixture
def wifi_commercial_profile():
    return load_profile_file("wifi_commercial.json")


@pytest.fixture
def warehouse_system():
    """Two-robot warehouse wired to an in-process transport; agents are not started."""
    return build_warehouse_system(2, seed=0, poll_period_s=0.05, report_timeout_s=0.02, m2m=M2MLog())


@pytest.fixture
def coordinator_client(warehouse_system):
    """Test client whose app holds a coordinator that has already run one round."""
    asyncio.run(warehouse_system.coordinator.run_round())
    return TestClient(create_app(warehouse_system.coordinator))
