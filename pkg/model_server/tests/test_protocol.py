import jsonschema
import pytest
from fastapi.testclient import TestClient

from model_server.engine import Engine
from model_server.server import create_app

GENERATE_RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["completions"],
    "properties": {
        "completions": {"type": "array", "items": {"type": "string"}, "minItems": 1},
    },
}

COUNT_RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["count"],
    "properties": {"count": {"type": "integer", "minimum": 0}},
}


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(Engine.load()))


def generate(client, **overrides):
    payload = {"prompt": "def add(a, b):", "decoding": {"kind": "greedy"},
               "max_new_tokens": 16}
    payload.update(overrides)
    return client.post("/generate", json=payload)


def test_generate_response_matches_schema(client):
    resp = generate(client)
    assert resp.status_code == 200
    jsonschema.validate(resp.json(), GENERATE_RESPONSE_SCHEMA)


def test_greedy_decoding_is_deterministic(client):
    a = generate(client).json()["completions"]
    b = generate(client).json()["completions"]
    assert a == b
    assert len(a) == 1


def test_temperature_returns_exactly_n_completions(client):
    resp = generate(client, decoding={"kind": "temperature", "t": 0.8, "n": 3})
    assert resp.status_code == 200
    body = resp.json()
    jsonschema.validate(body, GENERATE_RESPONSE_SCHEMA)
    assert len(body["completions"]) == 3


def test_beam_returns_width_completions(client):
    resp = generate(client, decoding={"kind": "beam", "width": 2})
    assert resp.status_code == 200
    assert len(resp.json()["completions"]) == 2


def test_count_tokens_schema_and_empty_string(client):
    resp = client.post("/count_tokens", json={"text": ""})
    assert resp.status_code == 200
    jsonschema.validate(resp.json(), COUNT_RESPONSE_SCHEMA)
    assert resp.json()["count"] == 0
    assert client.post("/count_tokens", json={"text": "abc"}).json()["count"] == 3


@pytest.mark.parametrize("payload", [
    {},
    {"prompt": "x"},  # missing decoding and budget
    {"prompt": "x", "decoding": {"kind": "psychic"}, "max_new_tokens": 16},
    {"prompt": "x", "decoding": {"kind": "temperature", "t": 0.8}, "max_new_tokens": 16},
    {"prompt": "x", "decoding": {"kind": "greedy"}, "max_new_tokens": 0},
    {"prompt": 7, "decoding": {"kind": "greedy"}, "max_new_tokens": 16},
])
def test_malformed_request_is_400_with_schema_message(client, payload):
    resp = client.post("/generate", json=payload)
    assert resp.status_code == 400
    assert "schema" in resp.json()["error"]


def test_advertised_generation_ceiling():
    engine = Engine.load()
    assert engine.max_new_tokens_ceiling >= 512
    with pytest.raises(ValueError):
        Engine.load().__class__(model=engine.model, tokenizer=engine.tokenizer,
                                model_tag="t", max_new_tokens_ceiling=100)
