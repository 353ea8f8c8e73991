"""Directed graphs as causal structures, compatibility and graph fine-graining."""
from __future__ import annotations

import heapq
import re
from dataclasses import dataclass
from typing import Iterable, Mapping

import networkx as nx

from .signalling import SignallingStructure


@dataclass(frozen=True)
class DiGraph:
    nodes: frozenset
    edges: frozenset
    allow_self_loops: bool = True

    def __post_init__(self):
        object.__setattr__(self, "nodes", frozenset(self.nodes))
        object.__setattr__(self, "edges", frozenset(tuple(e) for e in self.edges))
        for a, b in self.edges:
            if a not in self.nodes or b not in self.nodes:
                raise ValueError(f"edge ({a!r}, {b!r}) has an endpoint outside the node set")
            if a == b and not self.allow_self_loops:
                raise ValueError(f"self-loop on {a!r} not allowed")

    @classmethod
    def from_edges(cls, edges: Iterable, nodes: Iterable = ()) -> "DiGraph":
        edges = [tuple(e) for e in edges]
        ns = set(nodes) | {x for e in edges for x in e}
        return cls(frozenset(ns), frozenset(edges))

    def successors(self, n) -> set:
        return {b for a, b in self.edges if a == n}

    def predecessors(self, n) -> set:
        return {a for a, b in self.edges if b == n}

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.edges)
        return g

    def reach(self) -> dict:
        """node -> nodes reachable by a path of length >= 1."""
        succ = {n: set() for n in self.nodes}
        for a, b in self.edges:
            succ[a].add(b)
        out = {}
        for n in self.nodes:
            seen, stack = set(), list(succ[n])
            while stack:
                x = stack.pop()
                if x in seen:
                    continue
                seen.add(x)
                stack.extend(succ[x])
            out[n] = seen
        return out

    def transitive_closure(self) -> "DiGraph":
        r = self.reach()
        return DiGraph(self.nodes, frozenset((a, b) for a in r for b in r[a]))

    def is_acyclic(self) -> bool:
        return nx.is_directed_acyclic_graph(self.to_networkx())

    def find_cycle(self) -> list | None:
        """A directed cycle as a node list (first node repeated at the end), or None."""
        try:
            cyc = nx.find_cycle(self.to_networkx())
        except nx.NetworkXNoCycle:
            return None
        return [a for a, _ in cyc] + [cyc[0][0]]

    def to_dot(self, name: str = "G", highlight: Iterable = ()) -> str:
        hl = set(tuple(e) for e in highlight)
        lines = [f"digraph {name} {{"]
        for n in sorted(self.nodes, key=str):
            lines.append(f'  "{n}";')
        for a, b in sorted(self.edges, key=lambda e: (str(e[0]), str(e[1]))):
            attr = " [color=red]" if (a, b) in hl else ""
            lines.append(f'  "{a}" -> "{b}"{attr};')
        lines.append("}")
        return "\n".join(lines) + "\n"


_DOT_EDGE = re.compile(r'^\s*"?([^"\s;]+)"?\s*->\s*"?([^"\s;\[]+)"?')
_DOT_NODE = re.compile(r'^\s*"?([^"\s;\[\-{}]+)"?\s*(\[.*\])?\s*;\s*$')


def from_dot(text: str) -> DiGraph:
    """Read the simple ``a -> b;`` subset of DOT written by :meth:`DiGraph.to_dot`."""
    nodes, edges = set(), set()
    for line in text.splitlines():
        s = line.strip()
        if not s or s.startswith(("digraph", "}", "//")):
            continue
        m = _DOT_EDGE.match(s)
        if m:
            edges.add((m.group(1), m.group(2)))
            continue
        m = _DOT_NODE.match(s)
        if m:
            nodes.add(m.group(1))
    return DiGraph.from_edges(edges, nodes)


def has_path(g: DiGraph, a, b) -> bool:
    """True iff a directed path of length >= 1 runs from a to b."""
    for n in (a, b):
        if n not in g.nodes:
            raise KeyError(f"unknown node {n!r}")
    seen, stack = set(), [a]
    while stack:
        x = stack.pop()
        for y in g.successors(x):
            if y == b:
                return True
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return False


def compatible(sig: SignallingStructure, caus: DiGraph, emb: Mapping) -> bool:
    """Every path S1 ~> S2 in ``sig`` needs some s1, s2 with a path emb(s1) ~> emb(s2) in ``caus``."""
    return compatibility_violation(sig, caus, emb) is None


def compatibility_violation(sig: SignallingStructure, caus: DiGraph, emb: Mapping):
    """First (S1, S2) signalling path without a matching causal path, or None."""
    used = set(sig.systems) | {x for e in sig.edges for n in e for x in n}
    for s in used:
        if s not in emb:
            raise KeyError(f"system {s!r} is not embedded")
        if emb[s] not in caus.nodes:
            raise KeyError(f"system {s!r} is embedded at {emb[s]!r}, not a node of the causal structure")
    creach = caus.reach()
    sig_graph = DiGraph.from_edges(sig.edges)
    sreach = sig_graph.reach()

    def ok(s1, s2):
        return any(emb[b] in creach[emb[a]] for a in s1 for b in s2)

    for s1 in sorted(sreach, key=lambda n: sorted(n)):
        for s2 in sorted(sreach[s1], key=lambda n: sorted(n)):
            if not ok(s1, s2):
                return (s1, s2)
    return None


@dataclass(frozen=True)
class GraphFineGraining:
    """node -> non-empty set of fine nodes; the sets of different nodes are disjoint."""

    mapping: Mapping

    def __post_init__(self):
        m = {k: frozenset(v) for k, v in dict(self.mapping).items()}
        seen = {}
        for k, v in m.items():
            if not v:
                raise ValueError(f"node {k!r} is fine-grained into an empty set")
            for x in v:
                if x in seen:
                    raise ValueError(f"fine node {x!r} is shared by {seen[x]!r} and {k!r}")
                seen[x] = k
        object.__setattr__(self, "mapping", m)

    def __getitem__(self, k):
        return self.mapping[k]

    def inverse(self) -> dict:
        return {x: k for k, v in self.mapping.items() for x in v}

    @classmethod
    def identity(cls, g: DiGraph) -> "GraphFineGraining":
        return cls({n: {n} for n in g.nodes})


def is_graph_fine_graining(g_fine: DiGraph, g: DiGraph, f: GraphFineGraining) -> bool:
    """Every path between two distinct nodes of ``g`` has a path between some of their fine nodes."""
    for n in g.nodes:
        if n not in f.mapping:
            raise KeyError(f"node {n!r} has no fine-graining")
        extra = f[n] - g_fine.nodes
        if extra:
            raise ValueError(f"fine nodes {sorted(extra)} of {n!r} are not in the fine graph")
    fr, cr = g_fine.reach(), g.reach()
    for a in g.nodes:
        for b in cr[a] - {a}:
            if not any(y in fr[x] for x in f[a] for y in f[b]):
                return False
    return True


def loop_nodes(g: DiGraph) -> set:
    r = g.reach()
    return {n for n in g.nodes if n in r[n]}


def split_names(n) -> tuple[str, str]:
    return f"{n}#1", f"{n}#2"


def split_loop_nodes(g: DiGraph) -> tuple[DiGraph, GraphFineGraining]:
    """Split every node on a cycle into an early copy N#1 and a late copy N#2.

    N#1 keeps the parents outside cycles and all children, N#2 keeps all
    parents and the children outside cycles.  An edge between two cycle nodes
    M -> N becomes M#1 -> N#2 only, so the result is acyclic.
    """
    loops = loop_nodes(g)
    names = set(str(n) for n in g.nodes)
    for n in loops:
        for c in split_names(n):
            if c in names:
                raise ValueError(f"split copy name {c!r} collides with an existing node")
    fmap = {n: set(split_names(n)) if n in loops else {n} for n in g.nodes}
    edges = set()
    for a, b in g.edges:
        if a in loops and b in loops:
            edges.add((split_names(a)[0], split_names(b)[1]))
        elif a in loops:
            edges |= {(c, b) for c in split_names(a)}
        elif b in loops:
            edges |= {(a, c) for c in split_names(b)}
        else:
            edges.add((a, b))
    nodes = {x for v in fmap.values() for x in v}
    return DiGraph(frozenset(nodes), frozenset(edges)), GraphFineGraining(fmap)


def recombine(g_fine: DiGraph, f: GraphFineGraining) -> DiGraph:
    """Coarse-grain by merging each fine node set back into its node."""
    inv = f.inverse()
    return DiGraph(frozenset(f.mapping), frozenset((inv[a], inv[b]) for a, b in g_fine.edges))


def topological_embed(dag: DiGraph) -> dict:
    """Distinct integers increasing along every edge; ties broken by node name."""
    indeg = {n: 0 for n in dag.nodes}
    succ = {n: [] for n in dag.nodes}
    for a, b in dag.edges:
        if a == b:
            raise ValueError(f"graph has a self-loop at {a!r}")
        indeg[b] += 1
        succ[a].append(b)
    heap = [(str(n), n) for n, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    out = {}
    while heap:
        _, n = heapq.heappop(heap)
        out[n] = len(out)
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(heap, (str(m), m))
    if len(out) != len(dag.nodes):
        raise ValueError("graph is not acyclic")
    return out


def structure_is_acyclic(sig: SignallingStructure) -> bool:
    """Whether some linear order of the systems satisfies every edge S -> T.

    An edge is satisfied when some member of S comes before some member of T,
    so a joint edge constrains like one chosen singleton edge.  This is the
    sense in which a structure with joint edges counts as acyclic.
    """
    return acyclic_order(sig) is not None


def acyclic_order(sig: SignallingStructure):
    nodes = sorted(set(sig.systems) | {x for e in sig.edges for n in e for x in n})
    idx = {n: i for i, n in enumerate(nodes)}
    edges = [(frozenset(idx[x] for x in s), frozenset(idx[x] for x in t)) for s, t in sig.edges]
    if any(s & t and len(s) == 1 and len(t) == 1 for s, t in edges):
        return None
    n = len(nodes)
    # placing v when it completes T requires some member of S already placed
    full = (1 << n) - 1
    parent = {0: None}
    frontier = [0]
    while frontier:
        nxt = []
        for placed in frontier:
            for v in range(n):
                if placed >> v & 1:
                    continue
                ok = True
                for s, t in edges:
                    if v in t and all(placed >> x & 1 for x in t if x != v):
                        if not any(placed >> x & 1 for x in s if x != v):
                            ok = False
                            break
                if ok:
                    new = placed | (1 << v)
                    if new not in parent:
                        parent[new] = (placed, v)
                        nxt.append(new)
        frontier = nxt
    if full not in parent:
        return None
    order, cur = [], full
    while parent[cur] is not None:
        prev, v = parent[cur]
        order.append(nodes[v])
        cur = prev
    return order[::-1]
