"""The canned protocol exchanges must match what the client actually sends.

tests/fixtures/protocol_exchanges.json is the conformance fixture for any
server implementing the backend wire protocol. These tests keep it honest
from the client side: every canned request must be exactly what
BackendRequest would serialize, and the named response schemas must agree
with what the client's reply validation accepts.
"""

import json
from pathlib import Path

import pytest

from claimcheck.backend import (
    BackendRequest,
    BackendTask,
    MalformedBackendReplyError,
    _validate_body,
)

FIXTURE_PATH = Path(__file__).parent / "fixtures" / "protocol_exchanges.json"


@pytest.fixture(scope="module")
def exchanges():
    doc = json.loads(FIXTURE_PATH.read_text(encoding="utf-8"))
    return doc["exchanges"]


def test_fixture_has_twenty_exchanges(exchanges):
    assert len(exchanges) == 20
    assert sum(1 for e in exchanges if e["response_schema"] == "nli") >= 10
    assert sum(1 for e in exchanges if e["response_schema"] == "complete") >= 5


def test_requests_match_client_serialization(exchanges):
    for exchange in exchanges:
        request = exchange["request"]
        if exchange["response_schema"] == "complete":
            built = BackendRequest.complete(
                "b", request["prompt"], request["max_tokens"],
                request["temperature"])
            assert exchange["endpoint"] == "/v1/" + BackendTask.COMPLETE.value
        else:
            built = BackendRequest.classify_nli(
                "b", request["premise"], request["hypothesis"])
            assert exchange["endpoint"] == "/v1/" + BackendTask.CLASSIFY_NLI.value
        assert dict(built.payload) == request


def test_nli_requests_are_checkable(exchanges):
    for exchange in exchanges:
        if exchange["response_schema"] != "nli":
            continue
        assert exchange["request"]["premise"].strip()
        assert exchange["request"]["hypothesis"].strip()


def test_response_schemas_agree_with_client_validation():
    ok = _validate_body(BackendTask.COMPLETE, {"text": "anything"})
    assert ok.text == "anything"
    ok = _validate_body(
        BackendTask.CLASSIFY_NLI,
        {"label": "entailment", "scores": [0.7, 0.2, 0.1]})
    assert ok.label.value == "entailment"
    with pytest.raises(MalformedBackendReplyError):
        _validate_body(BackendTask.COMPLETE, {"text": 3})
    with pytest.raises(MalformedBackendReplyError):
        _validate_body(BackendTask.CLASSIFY_NLI,
                       {"label": "entailment", "scores": [0.7, 0.2]})
    with pytest.raises(MalformedBackendReplyError):
        _validate_body(BackendTask.CLASSIFY_NLI,
                       {"label": "supported", "scores": [0.7, 0.2, 0.1]})
    with pytest.raises(MalformedBackendReplyError):
        _validate_body(BackendTask.CLASSIFY_NLI,
                       {"label": "entailment", "scores": [0.9, 0.2, 0.1]})
