"""Shared fixtures: in-process test clients over the packaged model."""

from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from nli_service.app import create_app
from nli_service.config import NliServiceConfig


@pytest.fixture(scope="session")
def full_config():
    return NliServiceConfig(emit_representations=True)


@pytest.fixture(scope="session")
def client(full_config):
    """Client over a fully featured app; lifespan loads the model once."""
    with TestClient(create_app(full_config)) as test_client:
        yield test_client


@pytest.fixture(scope="session")
def minimal_client():
    """Client over a default app: no representations endpoint."""
    with TestClient(create_app(NliServiceConfig())) as test_client:
        yield test_client
