"""Scenario documents shipped in ``scenarios/``; regenerate with ``python -m causalembed.scenarios DIR``."""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from .channels import QuantumChannel, identity
from .process import classical_switch
from .qswitch import (QS_EMBEDDING, BOB_VELOCITY, build_wqs, build_wqs_friend, switch_spacetime,
                      friend_embedding, mutated_points)
from .serialization import channel_to_json, dumps, embedding_to_json, process_to_json
from .spacetime import Spacetime
from .tensor import ProductSpace


def _qs_embedding(points=None) -> dict:
    st = switch_spacetime(points)
    doc = embedding_to_json(st, {k: set(v) for k, v in QS_EMBEDDING.items()})
    doc["charts"] = [{"agent": "Alice", "velocity": 0.0}, {"agent": "Bob", "velocity": BOB_VELOCITY}]
    return doc


def _amplitude_damping(g: float, inp: str, out: str) -> QuantumChannel:
    k0 = np.array([[1, 0], [0, np.sqrt(1 - g)]])
    k1 = np.array([[0, np.sqrt(g)], [0, 0]])
    return QuantumChannel.from_kraus(ProductSpace.of((inp, 2)), ProductSpace.of((out, 2)), [k0, k1], name="damp")


def _hadamard(inp: str, out: str) -> QuantumChannel:
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    return QuantumChannel.from_kraus(ProductSpace.of((inp, 2)), ProductSpace.of((out, 2)), [h], name="hadamard")


def _swap_channel() -> QuantumChannel:
    sw = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            sw[2 * j + i, 2 * i + j] = 1
    return QuantumChannel.from_kraus(ProductSpace.of(("X", 2), ("Y", 2)), ProductSpace.of(("U", 2), ("V", 2)),
                                     [sw], name="swap")


def _deterministic(f) -> list:
    """P[x][y][a][b] (outcomes x, y; settings a, b) of the deterministic response (x, y) = f(a, b) on bits."""
    p = np.zeros((2, 2, 2, 2), dtype=int)
    for a in range(2):
        for b in range(2):
            x, y = f(a, b)
            p[x, y, a, b] = 1
    return [[[[str(v) for v in row] for row in m] for m in xy] for xy in p.tolist()]


def documents() -> dict:
    """File name -> JSON document."""
    docs = {}
    wqs = build_wqs()
    docs["wqs.json"] = process_to_json(wqs)
    docs["wqs_minkowski.json"] = _qs_embedding()
    docs["wqs_minkowski_mutated.json"] = _qs_embedding(mutated_points())

    cs, ab, ba = classical_switch()
    docs["classical_switch.json"] = process_to_json(cs)
    docs["a_before_b.json"] = process_to_json(ab)
    docs["b_before_a.json"] = process_to_json(ba)
    # A before B in time, spacelike otherwise: every region is a single point
    st = Spacetime.minkowski({"a_in": (0.0, 0.0), "a_out": (1.0, 0.0), "b_in": (3.0, 1.0), "b_out": (4.0, 1.0)})
    docs["a_before_b_embedding.json"] = embedding_to_json(
        st, {"A_I": {"a_in"}, "A_O": {"a_out"}, "B_I": {"b_in"}, "B_O": {"b_out"}})

    friend = build_wqs_friend()
    docs["friend.json"] = process_to_json(friend)
    for constrained, name in ((True, "friend_embedding.json"), (False, "friend_embedding_free.json")):
        fst, femb = friend_embedding(constrained)
        docs[name] = embedding_to_json(fst, femb)

    damp, had = _amplitude_damping(0.3, "X", "Y"), _hadamard("Y", "Z")
    docs["compose_sequential.json"] = {
        "channels": {"damp": channel_to_json(damp, "kraus"), "hadamard": channel_to_json(had, "kraus")},
        "steps": [{"op": "sequential", "inputs": ["damp", "hadamard"], "wires": [["Y", "Y"]], "name": "out"}],
        "result": "out"}
    docs["compose_loop.json"] = {
        "channels": {"swap": channel_to_json(_swap_channel(), "kraus")},
        "steps": [{"op": "loop", "inputs": ["swap"], "wires": [["V", "Y"]], "name": "looped"}],
        "result": "looped"}

    ident = identity(ProductSpace.of(("S_I", 2)), ProductSpace.of(("S_O", 2)))
    docs["identity_channel.json"] = channel_to_json(ident, "kraus")
    tl = Spacetime.minkowski({"p": (0.0, 0.0), "q": (2.0, 1.0), "r": (0.5, 3.0)})
    docs["identity_signalling.json"] = {"systems": ["S_I", "S_O"], "edges": [[["S_I"], ["S_O"]]]}
    docs["identity_timelike.json"] = embedding_to_json(tl, {"S_I": {"p"}, "S_O": {"q"}})
    docs["identity_spacelike.json"] = embedding_to_json(tl, {"S_I": {"p"}, "S_O": {"r"}})
    docs["identity_routing.json"] = {
        "channel": channel_to_json(ident, "kraus"),
        "embedding": embedding_to_json(Spacetime.minkowski({"p": (0.0, 0.0), "q1": (2.0, 1.0), "q2": (3.0, -1.0)}),
                                       {"S_I": {"p"}, "S_O": {"q1", "q2"}}),
        "routing": {"S_I": "p", "S_O": "q2"}}

    docs["cyclic_graph.json"] = {"nodes": ["A", "B", "D"], "edges": [["A", "B"], ["B", "A"], ["D", "A"]]}
    docs["two_cycle.json"] = {"dot": "digraph g {\n  A -> B;\n  B -> A;\n}\n"}

    docs["two_way_deterministic.json"] = {"P": _deterministic(lambda a, b: (b, a))}
    docs["one_way_deterministic.json"] = {"P": _deterministic(lambda a, b: (0, a))}

    docs["switch.json"] = {"alpha": 0.7071, "beta": 0.7071, "psi": [1, 0], "U": "X", "V": "Z"}
    two = Spacetime.minkowski({"a_in": (0.0, 0.0), "a_out": (1.0, 0.0), "b_in1": (3.0, 1.0), "b_out1": (4.0, 1.0),
                               "b_in2": (3.0, -1.5), "b_out2": (4.0, -1.5)})
    docs["ab_unravel.json"] = {
        "process": docs["a_before_b.json"],
        "embedding": embedding_to_json(two, {"A_I": {"a_in"}, "A_O": {"a_out"}, "B_I": {"b_in1", "b_in2"},
                                             "B_O": {"b_out1", "b_out2"}}),
        "routing": {"A_I": "a_in", "A_O": "a_out", "B_I": "b_in1", "B_O": "b_out1"}}
    # the switch with every message pinned to one point: A's output would have to reach B's earlier input
    docs["wqs_unravel_acausal.json"] = {
        "process": docs["wqs.json"], "embedding": docs["wqs_minkowski.json"],
        "routing": {"C_O": "P_C", "A_I": "P_I2", "A_O": "P_O2", "B_I": "Q_I1", "B_O": "Q_O1", "D_I": "P_D"}}
    return docs


def write(directory) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, doc in sorted(documents().items()):
        p = out / name
        p.write_text(dumps(doc))
        paths.append(p)
    return paths


if __name__ == "__main__":
    for p in write(sys.argv[1] if len(sys.argv) > 1 else "scenarios"):
        print(p)
