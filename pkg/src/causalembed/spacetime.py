"""Finite spacetimes, regions, relativistic causality and maximal fine-graining."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np

from .channels import (QuantumChannel, SystemSplit, identity_split, is_fine_graining_of, link,
                       state_preparation, trace_channel)
from .graphs import DiGraph, compatibility_violation
from .signalling import SignallingStructure
from .tensor import Factor, ProductSpace

LIGHTCONE_TOL = 1e-12


@dataclass(frozen=True)
class Spacetime:
    """A finite strict partial order on events.

    ``coordinates`` optionally records Minkowski coordinates (t, x, y, z)
    from which the order was derived.
    """

    events: frozenset
    order: frozenset
    coordinates: Mapping | None = field(default=None, compare=False, hash=False)

    def __post_init__(self):
        ev = frozenset(self.events)
        rel = frozenset(tuple(p) for p in self.order)
        object.__setattr__(self, "events", ev)
        object.__setattr__(self, "order", rel)
        for p, q in rel:
            if p not in ev or q not in ev:
                raise ValueError(f"order pair ({p!r}, {q!r}) uses an unknown event")
            if p == q:
                raise ValueError(f"order is not irreflexive at {p!r}")
            if (q, p) in rel:
                raise ValueError(f"order is not antisymmetric on ({p!r}, {q!r})")
        succ = {}
        for p, q in rel:
            succ.setdefault(p, set()).add(q)
        for p, q in rel:
            for r in succ.get(q, ()):
                if (p, r) not in rel:
                    raise ValueError(f"order is not transitive: {p!r}<{q!r}<{r!r} but not {p!r}<{r!r}")

    @classmethod
    def from_relations(cls, events: Iterable, pairs: Iterable) -> "Spacetime":
        """Transitive closure of ``pairs``; fails if that closure has a cycle."""
        g = DiGraph.from_edges(pairs, events)
        closure = g.transitive_closure()
        for a, b in closure.edges:
            if a == b:
                raise ValueError(f"relations contain a cycle through {a!r}")
        return cls(g.nodes, closure.edges)

    @classmethod
    def minkowski(cls, points: Mapping[str, Sequence[float]]) -> "Spacetime":
        """Lightcone order (c = 1) of events with coordinates (t, x, y, z)."""
        coords = {k: tuple(float(c) for c in v) + (0.0,) * (4 - len(v)) for k, v in points.items()}
        order = set()
        for p, a in coords.items():
            for q, b in coords.items():
                if p != q and lightcone_precedes(a, b):
                    order.add((p, q))
        return cls(frozenset(coords), frozenset(order), coordinates=coords)

    @classmethod
    def chain(cls, events: Sequence) -> "Spacetime":
        ev = list(events)
        return cls(frozenset(ev), frozenset((ev[i], ev[j]) for i in range(len(ev)) for j in range(i + 1, len(ev))))

    def precedes(self, p, q) -> bool:
        for e in (p, q):
            if e not in self.events:
                raise KeyError(f"unknown event {e!r}")
        return (p, q) in self.order

    def graph(self) -> DiGraph:
        return DiGraph(self.events, self.order)


def lightcone_precedes(a, b, tol: float = LIGHTCONE_TOL) -> bool:
    dt = b[0] - a[0]
    dr2 = sum((x - y) ** 2 for x, y in zip(a[1:], b[1:]))
    return dt > tol and dt * dt - dr2 >= -tol


@dataclass(frozen=True)
class CoordinateChart:
    """One agent's time coordinate (and spatial position) for each event."""

    agent: str
    coords: Mapping

    def __post_init__(self):
        # a bare number is a time with no spatial position
        object.__setattr__(self, "coords", {k: (float(v), ()) if np.isscalar(v) else
                                            (float(v[0]), tuple(float(x) for x in v[1:]))
                                            for k, v in dict(self.coords).items()})

    def time(self, event) -> float:
        if event not in self.coords:
            raise KeyError(f"chart {self.agent!r} does not cover event {event!r}")
        return self.coords[event][0]

    def check(self, st: Spacetime, tol: float = LIGHTCONE_TOL) -> "CoordinateChart":
        """Reject charts in which some P < Q does not have t_P < t_Q."""
        for p, q in st.order:
            if p in self.coords and q in self.coords and not self.time(p) < self.time(q):
                raise ValueError(f"chart {self.agent!r} puts {q!r} no later than {p!r} although {p!r} < {q!r}")
        return self


def chart(agent: str, coords: Mapping, st: Spacetime) -> CoordinateChart:
    return CoordinateChart(agent, coords).check(st)


def boosted_chart(agent: str, st: Spacetime, velocity: float = 0.0, axis: int = 0) -> CoordinateChart:
    """Chart of an observer moving with ``velocity`` along spatial ``axis``."""
    if st.coordinates is None:
        raise ValueError("spacetime has no coordinates to boost")
    if not -1 < velocity < 1:
        raise ValueError("velocity must satisfy |v| < 1")
    g = 1.0 / math.sqrt(1 - velocity ** 2)
    out = {}
    for e, c in st.coordinates.items():
        t, r = c[0], list(c[1:])
        x = r[axis]
        r[axis] = g * (x - velocity * t)
        out[e] = (g * (t - velocity * x),) + tuple(r)
    return chart(agent, out, st)


def as_region(points, st: Spacetime | None = None) -> frozenset:
    r = frozenset([points]) if isinstance(points, str) else frozenset(points)
    if not r:
        raise ValueError("a region needs at least one event")
    if st is not None:
        for p in r:
            if p not in st.events:
                raise KeyError(f"unknown event {p!r}")
    return r


def region_precedes(a, b, st: Spacetime) -> bool:
    """Some point of ``a`` precedes some point of ``b``."""
    a, b = as_region(a, st), as_region(b, st)
    return any((p, q) in st.order for p in a for q in b)


def region_graph(emb: Mapping, st: Spacetime) -> DiGraph:
    """Labels as nodes, an edge a -> b when region(a) precedes region(b)."""
    regs = {k: as_region(v, st) for k, v in emb.items()}
    edges = {(a, b) for a in regs for b in regs if a != b and region_precedes(regs[a], regs[b], st)}
    return DiGraph(frozenset(regs), frozenset(edges))


def region_cycle(regions: Sequence, st: Spacetime) -> list | None:
    regs = list(dict.fromkeys(as_region(r, st) for r in regions))
    names = {r: "{" + ",".join(sorted(r)) + "}" for r in regs}
    edges = {(names[a], names[b]) for a in regs for b in regs if a != b and region_precedes(a, b, st)}
    return DiGraph(frozenset(names.values()), frozenset(edges)).find_cycle()


def is_cycle_free(regions: Sequence, st: Spacetime) -> bool:
    return region_cycle(regions, st) is None


def relativistic_causality(sig: SignallingStructure, emb: Mapping, st: Spacetime) -> bool:
    return causality_violation(sig, emb, st) is None


def causality_violation(sig: SignallingStructure, emb: Mapping, st: Spacetime):
    """A signalling path (S1, S2) with no matching path in the region graph, or None."""
    for s in set(sig.systems) | {x for e in sig.edges for n in e for x in n}:
        if s not in emb:
            raise KeyError(f"system {s!r} has no region")
    g = region_graph(emb, st)
    return compatibility_violation(sig, g, {k: k for k in emb})


def time_localised(region, ch: CoordinateChart) -> bool:
    ts = [ch.time(p) for p in as_region(region)]
    return max(ts) - min(ts) <= 1e-9


def pairwise_correspondence(a, b, st: Spacetime):
    """A bijection O: a -> b with p < O(p) for every p, or None."""
    a, b = as_region(a, st), as_region(b, st)
    if len(a) != len(b):
        return None
    g = nx.Graph()
    left = [("in", p) for p in sorted(a)]
    g.add_nodes_from(left, bipartite=0)
    g.add_nodes_from((("out", q) for q in sorted(b)), bipartite=1)
    g.add_edges_from((("in", p), ("out", q)) for p in sorted(a) for q in sorted(b) if (p, q) in st.order)
    m = nx.bipartite.hopcroft_karp_matching(g, top_nodes=left)
    pairs = {p: m[("in", p)][1] for p in sorted(a) if ("in", p) in m}
    return pairs if len(pairs) == len(a) else None


# -- elemental subsystems --------------------------------------------------

def elemental_label(system: str, point: str) -> str:
    return f"{system}^{{{point}}}"


def single_use_split(system: str, dim: int, points: Sequence[str], carriers: Sequence[str] | None = None) -> SystemSplit:
    """One message on one of the vacuum-extended copies, vacuum on all others.

    ``carriers`` limits the copies that may hold the message (default: all).
    """
    pts = list(points)
    carriers = pts if carriers is None else list(carriers)
    labels = tuple(elemental_label(system, p) for p in pts)
    if len(pts) == 1:
        return identity_split(labels[0], dim)
    dims = [dim + 1] * len(pts)
    subs = []
    total = int(np.prod(dims))
    for v in range(dim):
        cols = []
        for k in range(len(pts)):
            if pts[k] not in carriers:
                continue
            idx = [0] * len(pts)
            idx[k] = v + 1
            c = np.zeros(total, dtype=complex)
            c[np.ravel_multi_index(idx, dims)] = 1
            cols.append(c)
        subs.append(np.array(cols).T)
    return SystemSplit(labels, tuple(subs))


@dataclass
class ElementalImplementation:
    """A channel over elemental subsystems S^{P} together with its bookkeeping."""

    channel: QuantumChannel
    embedding: dict          # coarse label -> region (frozenset of points)
    elemental: dict          # coarse label -> tuple of elemental labels, in region order
    point_of: dict           # elemental label -> point
    sys_map: dict            # coarse label -> SystemSplit (single-use subspaces)


def _region_order(region) -> list:
    return sorted(region)


def elemental_spaces(coarse: QuantumChannel, emb: Mapping):
    elemental, point_of, sys_map = {}, {}, {}
    in_f, out_f = [], []
    for side, space, acc in (("in", coarse.input, in_f), ("out", coarse.output, out_f)):
        for f in space:
            if f.label not in emb:
                raise KeyError(f"system {f.label!r} has no region")
            pts = _region_order(as_region(emb[f.label]))
            split = single_use_split(f.label, f.dim, pts)
            sys_map[f.label] = split
            elemental[f.label] = split.fine_labels
            for p, l in zip(pts, split.fine_labels):
                point_of[l] = p
                acc.append(Factor(l, f.dim + 1, True) if len(pts) > 1 else Factor(l, f.dim))
    return elemental, point_of, sys_map, ProductSpace(tuple(in_f)), ProductSpace(tuple(out_f))


def _extend_routed(ch: QuantumChannel, labels: set) -> QuantumChannel:
    """Add a vacuum level to the routed factors, one factor at a time.

    A vacant routed input is read as |0> and a routed output always carries a
    message, so no factor's vacancy influences another factor.
    """
    decs, enc = [np.ones((1, 1))], np.ones((1, 1))
    for f in ch.input:
        ms = [np.eye(f.dim)]
        if f.label in labels:
            shift = np.zeros((f.dim, f.dim + 1))
            shift[:, 1:] = np.eye(f.dim)
            vac = np.zeros((f.dim, f.dim + 1))
            vac[0, 0] = 1
            ms = [shift, vac]
        decs = [np.kron(d, m) for d in decs for m in ms]
    for f in ch.output:
        m = np.eye(f.dim)
        if f.label in labels:
            m = np.zeros((f.dim + 1, f.dim))
            m[1:, :] = np.eye(f.dim)
        enc = np.kron(enc, m)
    inp = ProductSpace(tuple(Factor(f.label, f.dim + 1, True) if f.label in labels else f for f in ch.input))
    out = ProductSpace(tuple(Factor(f.label, f.dim + 1, True) if f.label in labels else f for f in ch.output))
    return QuantumChannel.from_kraus(inp, out, [enc @ k @ d for k in ch.kraus_ops for d in decs], name=ch.name)


def maximal_fine_grain(coarse: QuantumChannel, emb: Mapping, routing, st: Spacetime | None = None,
                       check: bool = True, tol: float = 1e-8) -> ElementalImplementation:
    """Realise ``coarse`` over elemental subsystems.

    ``routing`` is either a mapping system -> point (the message always sits at
    that point and every other copy carries vacuum) or an explicit channel over
    the elemental labels.  With ``check`` the result is verified to fine-grain
    ``coarse`` on the single-use subspaces.
    """
    emb = {k: as_region(v, st) for k, v in emb.items()}
    elemental, point_of, sys_map, e_in, e_out = elemental_spaces(coarse, emb)
    if isinstance(routing, QuantumChannel):
        ch = routing
        if sorted(ch.input.labels) != sorted(e_in.labels) or sorted(ch.output.labels) != sorted(e_out.labels):
            raise ValueError("routing channel does not act on the elemental subsystems")
    else:
        rename, extend, parts = {}, [], []
        for space, is_in in ((coarse.input, True), (coarse.output, False)):
            for f in space:
                if f.label not in routing:
                    raise ValueError(f"no routing point for {f.label!r}")
                p = routing[f.label]
                if p not in emb[f.label]:
                    raise ValueError(f"routing point {p!r} of {f.label!r} lies outside its region")
                target = elemental_label(f.label, p)
                rename[f.label] = target
                if len(emb[f.label]) > 1:
                    extend.append(target)
                    sys_map[f.label] = single_use_split(f.label, f.dim, _region_order(emb[f.label]), [p])
                for q in _region_order(emb[f.label]):
                    if q == p:
                        continue
                    l = elemental_label(f.label, q)
                    if is_in:
                        parts.append(trace_channel(ProductSpace((Factor(l, f.dim + 1, True),)), name="discard"))
                    else:
                        vac = np.zeros((f.dim + 1, f.dim + 1))
                        vac[0, 0] = 1
                        parts.append(state_preparation(vac, ProductSpace((Factor(l, f.dim + 1, True),)),
                                                       name="vacuum"))
        core = coarse.relabel(rename)
        if extend:
            core = _extend_routed(core, set(extend))
        ch = link([core] + parts, [], name=f"{coarse.name}~elemental", method="kraus")
        ch = ch.reorder(e_in.labels, e_out.labels)
    if st is not None:
        for l, p in point_of.items():
            if p not in st.events:
                raise KeyError(f"unknown event {p!r}")
    impl = ElementalImplementation(ch, emb, elemental, point_of, sys_map)
    if check and not is_fine_graining_of(ch, coarse, sys_map, tol=tol):
        raise ValueError("elemental channel does not fine-grain the coarse channel on the single-use subspace")
    return impl


def edges_aligned(sig: SignallingStructure, point_of: Mapping, st: Spacetime) -> list:
    """Singleton edges S^P -> T^Q whose points are not ordered P < Q (empty when aligned)."""
    bad = []
    for a, b in sorted(sig.singleton_edges()):
        if (point_of[a], point_of[b]) not in st.order:
            bad.append((a, b))
    return bad
