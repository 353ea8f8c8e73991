import json
import socket
import threading
import time

import numpy as np
import pytest
import uvicorn
from click.testing import CliRunner

from causalembed import nogo, scenarios
from causalembed.cli import cli
from causalembed.serialization import (channel_from_json, channel_to_json, distribution_from_json,
                                       embedding_from_json, embedding_to_json, graph_from_json, graph_to_json,
                                       process_from_json, process_to_json, signalling_from_json,
                                       signalling_to_json)
from conftest import SCENARIOS
from oracles import choi_from_kraus, compose_kraus

S = {p.stem: str(p) for p in SCENARIOS.glob("*.json")}

RUNS = [
    (["validate", "--process", S["wqs"]], 0),
    (["validate", "--process", S["classical_switch"]], 0),
    (["compose", "--scenario", S["compose_sequential"]], 0),
    (["compose", "--scenario", S["compose_loop"]], 0),
    (["signalling", "--channel", S["identity_channel"]], 0),
    (["signalling", "--process", S["wqs"]], 0),
    (["causality", "--signalling", S["identity_signalling"], "--embedding", S["identity_timelike"]], 0),
    (["causality", "--signalling", S["identity_signalling"], "--embedding", S["identity_spacelike"]], 0),
    (["finegrain", "--graph", S["cyclic_graph"]], 0),
    (["finegrain", "--graph", S["two_cycle"]], 0),
    (["finegrain", "--routing", S["identity_routing"]], 0),
    (["fixed-order", "--process", S["a_before_b"]], 0),
    (["fixed-order", "--process", S["classical_switch"]], 0),
    (["causal-dist", "--distribution", S["two_way_deterministic"]], 0),
    (["causal-dist", "--distribution", S["one_way_deterministic"]], 0),
    (["nogo", "--process", S["wqs"], "--embedding", S["wqs_minkowski"]], 0),
    (["nogo", "--process", S["friend"], "--embedding", S["friend_embedding"]], 0),
    (["nogo", "--process", S["a_before_b"], "--embedding", S["a_before_b_embedding"]], 0),
    (["unravel", "--builtin", "qs"], 0),
    (["unravel", "--scenario", S["ab_unravel"]], 0),
    (["unravel", "--scenario", S["wqs_unravel_acausal"]], 1),
    (["switch-demo", "--scenario", S["switch"]], 0),
]


def invoke(args, **kw):
    return CliRunner().invoke(cli, args, catch_exceptions=False, **kw)


def report(args):
    r = invoke(args)
    assert r.exit_code == 0, r.output
    return json.loads(r.stdout)


@pytest.mark.parametrize("args,code", RUNS, ids=[" ".join(a[:1] + [x.split("/")[-1] for x in a[1:]]) for a, _ in RUNS])
def test_exit_codes_on_the_fixtures(args, code):
    assert invoke(args).exit_code == code


@pytest.mark.parametrize("args", [RUNS[0][0], RUNS[15][0], RUNS[21][0], RUNS[13][0]])
def test_reports_are_byte_identical(args):
    assert invoke(args).stdout == invoke(args).stdout


def test_same_seed_same_validation_report():
    a = invoke(["--seed", "5", "validate", "--process", S["wqs"]]).stdout
    assert a == invoke(["--seed", "5", "validate", "--process", S["wqs"]]).stdout


def test_shipped_fixtures_are_regenerated_exactly(tmp_path):
    scenarios.write(tmp_path)
    for p in SCENARIOS.glob("*.json"):
        assert (tmp_path / p.name).read_text() == p.read_text(), p.name
    assert {p.name for p in tmp_path.glob("*.json")} == {p.name for p in SCENARIOS.glob("*.json")}


def test_compose_matches_direct_kraus_composition():
    doc = json.loads((SCENARIOS / "compose_sequential.json").read_text())
    damp = channel_from_json(doc["channels"]["damp"])
    had = channel_from_json(doc["channels"]["hadamard"])
    want = choi_from_kraus(compose_kraus(damp.kraus, had.kraus), 2)
    got = channel_from_json(report(["compose", "--scenario", S["compose_sequential"]])["channel"])
    assert np.allclose(got.choi, want, atol=1e-12)


def test_loop_of_swap_is_identity():
    got = channel_from_json(report(["compose", "--scenario", S["compose_loop"]])["channel"])
    assert np.allclose(got.choi, choi_from_kraus([np.eye(2)], 2))


def test_switch_demo_default_flags():
    rep = report(["switch-demo", "--alpha", "0.7071", "--beta", "0.7071", "--u", "X", "--v", "Z"])
    assert abs(rep["P_minus"] - 1) < 1e-9
    assert rep["contraction_error"] < 1e-9 and rep["protocol_error"] < 1e-9
    assert rep["elemental_edges_match"] and rep["misaligned_edges"] == []
    assert rep["single_use_counters"] == {"A": 1.0, "B": 1.0}


def test_nogo_switch_report():
    rep = report(["nogo", "--process", S["wqs"], "--embedding", S["wqs_minkowski"]])
    assert (rep["fixed_order"], rep["causality"], rep["cycle_free"]) == (None, True, False)


def test_causal_dist_reports():
    rep = report(["causal-dist", "--distribution", S["two_way_deterministic"]])
    assert rep["causal"] is False and rep["exact"] and rep["certificate_verified"]
    rep = report(["causal-dist", "--distribution", S["one_way_deterministic"]])
    assert rep["causal"] is True and rep["q"] == "1"


def test_out_dir_artifacts(tmp_path):
    r = invoke(["--out-dir", str(tmp_path), "nogo", "--process", S["wqs"], "--embedding", S["wqs_minkowski"]])
    assert r.exit_code == 0
    assert (tmp_path / "report.json").read_text() == r.stdout
    assert (tmp_path / "signalling.dot").read_text().startswith("digraph")
    assert "cycle.dot" in {p.name for p in tmp_path.iterdir()}
    assert '"{A_O}"' in (tmp_path / "signalling.dot").read_text()


def test_invalid_inputs_exit_one(tmp_path):
    r = invoke(["validate", "--process", str(tmp_path / "missing.json")])
    assert r.exit_code == 1 and "cannot read" in r.stderr
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert invoke(["validate", "--process", str(bad)]).exit_code == 1
    wrong = tmp_path / "wrong.json"
    doc = json.loads((SCENARIOS / "a_before_b.json").read_text())
    doc["parties"][0]["d_in"] = 3
    wrong.write_text(json.dumps(doc))
    r = invoke(["validate", "--process", str(wrong)])
    assert r.exit_code == 1 and "invalid scenario: process" in r.stderr
    r = invoke(["causality", "--signalling", S["identity_signalling"], "--embedding", S["wqs"]])
    assert r.exit_code == 1 and "embedding.spacetime" in r.stderr


def test_theorem_violation_exits_two(tmp_path, monkeypatch):
    monkeypatch.setattr(nogo, "is_fixed_order", lambda *a, **k: None)
    r = invoke(["--out-dir", str(tmp_path), "nogo", "--process", S["a_before_b"],
                "--embedding", S["a_before_b_embedding"]])
    assert r.exit_code == 2
    dump = json.loads((tmp_path / "counterexample.json").read_text())
    assert dump["dump"]["report"]["causality"] and dump["dump"]["report"]["cycle_free"]


ROUND_TRIPS = {
    "wqs": (process_from_json, process_to_json),
    "a_before_b": (process_from_json, process_to_json),
    "identity_channel": (channel_from_json, lambda c: channel_to_json(c, "kraus")),
    "identity_signalling": (signalling_from_json, signalling_to_json),
    "cyclic_graph": (graph_from_json, graph_to_json),
    "wqs_minkowski": (embedding_from_json, lambda t: embedding_to_json(*t)),
    "friend_embedding": (embedding_from_json, lambda t: embedding_to_json(*t)),
}


@pytest.mark.parametrize("name", sorted(ROUND_TRIPS))
def test_inputs_round_trip(name):
    parse, ser = ROUND_TRIPS[name]
    doc = json.loads((SCENARIOS / f"{name}.json").read_text())
    once = ser(parse(doc))
    assert ser(parse(json.loads(json.dumps(once)))) == once


def test_distribution_round_trip():
    doc = json.loads((SCENARIOS / "two_way_deterministic.json").read_text())
    p = distribution_from_json(doc)
    again = distribution_from_json({"P": np.vectorize(str, otypes=[object])(p).tolist()})
    assert np.all(again == p)


# -- the same commands against a running service ---------------------------------------

@pytest.fixture(scope="module")
def server():
    from causalembed.service import app
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    srv = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error"))
    t = threading.Thread(target=srv.run, daemon=True)
    t.start()
    for _ in range(200):
        if srv.started:
            break
        time.sleep(0.02)
    yield f"http://127.0.0.1:{port}"
    srv.should_exit = True
    t.join(5)


@pytest.mark.parametrize("args,code", [RUNS[0], RUNS[15], RUNS[20]], ids=["validate", "nogo", "unravel-acausal"])
def test_remote_matches_local(server, args, code):
    local = invoke(args)
    remote = invoke(["--server", server] + args)
    assert remote.exit_code == local.exit_code == code
    assert remote.stdout == local.stdout


def test_remote_theorem_violation(server, monkeypatch, tmp_path):
    monkeypatch.setattr(nogo, "is_fixed_order", lambda *a, **k: None)
    r = invoke(["--server", server, "--out-dir", str(tmp_path), "nogo", "--process", S["a_before_b"],
                "--embedding", S["a_before_b_embedding"]])
    assert r.exit_code == 2 and (tmp_path / "counterexample.json").exists()
