import json

import pytest
from fastapi.testclient import TestClient

from causalembed import nogo
from causalembed.commands import COMMANDS
from causalembed.service import app
from conftest import SCENARIOS


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def doc(name):
    return json.loads((SCENARIOS / f"{name}.json").read_text())


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200 and r.json()["commands"] == sorted(COMMANDS)


def test_fixed_order_endpoint(client):
    r = client.post("/v1/fixed-order", json={"inputs": {"process": doc("a_before_b")}})
    assert r.status_code == 200
    assert r.json()["report"]["fixed_order"]["order"] == ["A", "B"]


def test_artifacts_are_returned(client):
    r = client.post("/v1/signalling", json={"inputs": {"channel": doc("identity_channel")}, "flags": {"max_subset": 1}})
    body = r.json()
    assert r.status_code == 200 and body["artifacts"]["signalling.dot"].startswith("digraph")
    assert body["report"]["structure"]["edges"] == [[["S_I"], ["S_O"]]]


def test_unknown_command(client):
    r = client.post("/v1/nonsense", json={"inputs": {}})
    assert r.status_code == 404


def test_invalid_scenario_gives_located_errors(client):
    bad = doc("a_before_b")
    bad["parties"][1]["d_out"] = 0
    r = client.post("/v1/validate", json={"inputs": {"process": bad}})
    assert r.status_code == 422
    locs = [loc for loc, _ in r.json()["errors"]]
    assert any(loc.startswith("process.parties.1") for loc in locs)
    r = client.post("/v1/validate", json={"inputs": {}})
    assert r.status_code == 422 and r.json()["errors"][0][0] == "process"


def test_malformed_flags_rejected(client):
    r = client.post("/v1/validate", json={"inputs": {"process": doc("a_before_b")}, "flags": {"tol": -1}})
    assert r.status_code == 422


def test_theorem_violation_is_a_conflict(client, monkeypatch):
    monkeypatch.setattr(nogo, "is_fixed_order", lambda *a, **k: None)
    r = client.post("/v1/nogo", json={"inputs": {"process": doc("a_before_b"),
                                                 "embedding": doc("a_before_b_embedding")}})
    assert r.status_code == 409 and "dump" in r.json()
