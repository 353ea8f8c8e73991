"""JSON forms of the library objects.

Complex numbers are [re, im] pairs and matrices nested arrays of them; a
plain real number is accepted wherever a complex entry is expected.
"""
from __future__ import annotations

import json
from fractions import Fraction
from typing import Any, Mapping

import numpy as np

from .channels import QuantumChannel
from .graphs import DiGraph, from_dot
from .process import FixedOrderWitness, Party, ProcessMatrix
from .signalling import SignallingStructure
from .spacetime import Spacetime, boosted_chart, chart
from .tensor import Factor, ProductSpace


def complex_array(obj, ndim: int) -> np.ndarray:
    """Parse a nested list into a complex array with ``ndim`` axes."""
    arr = np.asarray(obj, dtype=float)
    if arr.ndim == ndim + 1 and arr.shape[-1] == 2:
        return arr[..., 0] + 1j * arr[..., 1]
    if arr.ndim == ndim:
        return arr.astype(complex)
    raise ValueError(f"expected a {ndim}-dimensional array of numbers or [re, im] pairs, got shape {arr.shape}")


def complex_to_json(a) -> list:
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def space_to_json(space: ProductSpace) -> list:
    return [{"label": f.label, "dim": f.dim, "vacuum": f.vacuum} for f in space]


def space_from_json(obj) -> ProductSpace:
    return ProductSpace(tuple(Factor(f["label"], int(f["dim"]), bool(f.get("vacuum", False))) for f in obj))


def channel_to_json(ch: QuantumChannel, form: str = "choi") -> dict:
    out = {"name": ch.name, "input": space_to_json(ch.input), "output": space_to_json(ch.output)}
    if form == "choi":
        out["choi"] = complex_to_json(ch.choi)
    else:
        out["kraus"] = [complex_to_json(k) for k in ch.kraus_ops]
    return out


def channel_from_json(obj: Mapping) -> QuantumChannel:
    inp, out = space_from_json(obj["input"]), space_from_json(obj["output"])
    if obj.get("choi") is not None:
        return QuantumChannel.from_choi(inp, out, complex_array(obj["choi"], 2), name=obj.get("name", ""))
    ops = [complex_array(k, 2) for k in obj["kraus"]]
    return QuantumChannel.from_kraus(inp, out, ops, name=obj.get("name", ""))


def party_to_json(p: Party) -> dict:
    return {"name": p.name, "d_in": p.d_in, "d_out": p.d_out, "d_setting": p.d_setting, "d_outcome": p.d_outcome,
            "in_label": p.in_label, "out_label": p.out_label}


def party_from_json(obj: Mapping) -> Party:
    return Party(obj["name"], int(obj["d_in"]), int(obj["d_out"]), int(obj.get("d_setting", 1)),
                 int(obj.get("d_outcome", 1)), obj.get("in_label") or "", obj.get("out_label") or "")


def process_to_json(pm: ProcessMatrix) -> dict:
    out = {"name": pm.name, "parties": [party_to_json(p) for p in pm.parties]}
    f = pm.factors if pm.is_factored else None
    if f is not None and f.shape[1] == 1:
        out["W"] = complex_to_json(f[:, 0])
        out["pure"] = True
    else:
        out["W"] = complex_to_json(pm.matrix)
        out["pure"] = False
    return out


def process_from_json(obj: Mapping) -> ProcessMatrix:
    parties = [party_from_json(p) for p in obj["parties"]]
    dim = 1
    for p in parties:
        dim *= p.d_in * p.d_out
    raw = np.asarray(obj["W"], dtype=float)
    pure = obj.get("pure")
    if pure is None:
        pure = raw.ndim == 1 or (raw.ndim == 2 and raw.shape == (dim, 2) and dim != 2)
    if pure:
        return ProcessMatrix(parties, factors=complex_array(obj["W"], 1), name=obj.get("name", ""))
    return ProcessMatrix(parties, W=complex_array(obj["W"], 2), name=obj.get("name", ""))


def spacetime_to_json(st: Spacetime) -> dict:
    if st.coordinates is not None:
        return {"frame": "minkowski", "points": {e: list(map(float, st.coordinates[e])) for e in sorted(st.events)}}
    return {"events": sorted(st.events), "order": sorted([list(r) for r in st.order])}


def spacetime_from_json(obj: Mapping) -> Spacetime:
    """Minkowski points ``{"frame": "minkowski", "points": {name: [t, x, ...]}}`` (or ``{"minkowski": points}``),
    or an explicit order ``{"events": [...], "order": [[p, q], ...]}`` (``relations`` also accepted)."""
    pts = obj.get("points") if obj.get("frame") == "minkowski" else obj.get("minkowski")
    if pts is not None:
        return Spacetime.minkowski({k: tuple(v) for k, v in pts.items()})
    rel = obj.get("order") if obj.get("order") is not None else obj.get("relations", [])
    return Spacetime.from_relations(obj["events"], [tuple(r) for r in rel or []])


def embedding_from_json(obj: Mapping):
    """(spacetime, label -> region, charts) from an embedding document."""
    st = spacetime_from_json(obj["spacetime"])
    emb = {k: frozenset(v) for k, v in obj["embedding"].items()}
    charts = []
    for c in obj.get("charts", []):
        if c.get("coords") is not None:
            charts.append(chart(c["agent"], c["coords"], st))
        else:
            charts.append(boosted_chart(c["agent"], st, float(c.get("velocity", 0.0)), int(c.get("axis", 0))))
    return st, emb, charts


def embedding_to_json(st: Spacetime, emb: Mapping, charts=()) -> dict:
    out = {"spacetime": spacetime_to_json(st), "embedding": {k: sorted(v) for k, v in sorted(emb.items())}}
    out["charts"] = [{"agent": c.agent, "coords": {e: c.time(e) for e in sorted(c.coords)}}
                     for c in charts]
    return out


def signalling_to_json(sig: SignallingStructure) -> dict:
    return {"systems": list(sig.systems), "edges": [[a, b] for a, b in sig.sorted_edges()]}


def signalling_from_json(obj: Mapping) -> SignallingStructure:
    return SignallingStructure.from_pairs(obj["systems"], [(frozenset(a), frozenset(b)) for a, b in obj["edges"]])


def graph_to_json(g: DiGraph) -> dict:
    return {"nodes": sorted(map(str, g.nodes)), "edges": sorted([list(map(str, e)) for e in g.edges])}


def graph_from_json(obj: Mapping) -> DiGraph:
    if obj.get("dot") is not None:
        return from_dot(obj["dot"])
    return DiGraph.from_edges([tuple(e) for e in obj.get("edges", [])], obj.get("nodes", []))


def _rational(v):
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, int):
        return Fraction(v)
    return Fraction(v).limit_denominator(10 ** 12)


def distribution_from_json(obj: Mapping) -> np.ndarray:
    """P[x][y][a][b] with outcomes x, y and settings a, b.

    Entries are numbers or rational strings like "1/2".  A document with any
    string, or with integers only, is read as exact fractions; otherwise as floats.
    """
    raw = np.asarray(obj["P"], dtype=object)
    flat = raw.ravel()
    if any(isinstance(v, str) for v in flat) or all(isinstance(v, int) and not isinstance(v, bool) for v in flat):
        return np.vectorize(_rational, otypes=[object])(raw)
    return np.asarray(raw, dtype=float)


def fraction_to_json(v) -> str | float:
    if isinstance(v, Fraction):
        return str(v)
    return float(v)


def witness_to_json(w: FixedOrderWitness | None):
    if w is None:
        return None
    return {"order": list(w.order), "method": w.method, "relations": sorted([list(r) for r in w.relations])}


def dumps(obj: Any) -> str:
    """Deterministic JSON text."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"
