"""Signalling relations of channels and the structures they form."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

import numpy as np

from .channels import QuantumChannel, SystemSplit
from .sampling import rng_from, random_vector
from .tensor import DEFAULT_TOL, ProductSpace, permute_vector

# Above this many entries in the reduced Choi matrix the randomized probe is used.
EXACT_LIMIT = 1 << 22
PROBE_SEED = 20240917
PROBE_ROUNDS = 3


def _reduced_choi(ch: QuantumChannel, s_out: list[str]) -> tuple[np.ndarray, ProductSpace]:
    """Choi matrix of tr_{O minus S_O} o Phi, over input (x) S_O."""
    rest = [l for l in ch.output.labels if l not in s_out]
    out_sel = ch.output.select(s_out)
    if ch.has_choi:
        t = ch.choi_tensor()
        n_in, n_out = len(ch.input), len(ch.output)
        n = n_in + n_out
        row = list(range(n))
        col = list(range(n, 2 * n))
        for l in rest:
            k = n_in + ch.output.index(l)
            col[k] = row[k]
        keep_out = [n_in + ch.output.index(l) for l in s_out]
        out_idx = list(range(n_in)) + keep_out + [n + i for i in range(n_in)] + [n + k for k in keep_out]
        red = np.einsum(t, row + col, out_idx)
    else:
        ops = ch.kraus_ops.reshape((-1,) + ch.output.dims + (ch.d_in,))
        order = [ch.output.index(l) + 1 for l in s_out] + [ch.output.index(l) + 1 for l in rest]
        ops = ops.transpose([0] + order + [len(ch.output) + 1])
        ops = ops.reshape(len(ops), out_sel.dim, -1, ch.d_in)
        # J[(i,o),(j,o')] = sum_m sum_r K[o,r,i] conj(K[o',r,j])
        red = np.einsum("mori,mprj->iojp", ops, ops.conj(), optimize=True)
    d = ch.d_in * out_sel.dim
    return red.reshape(d, d), ProductSpace(ch.input.factors + out_sel.factors)


def _signals_exact(ch, s_in, s_out, tol):
    red, _ = _reduced_choi(ch, s_out)
    rest_in = [l for l in ch.input.labels if l not in s_in]
    d_s = ch.input.select(s_in).dim
    d_t = ch.input.select(rest_in).dim
    d_o = ch.output.select(s_out).dim
    n_in = len(ch.input)
    t = red.reshape(ch.input.dims + (d_o,) + ch.input.dims + (d_o,))
    perm_in = [ch.input.index(l) for l in s_in] + [ch.input.index(l) for l in rest_in]
    perm = perm_in + [n_in] + [n_in + 1 + p for p in perm_in] + [2 * n_in + 1]
    t = t.transpose(perm).reshape(d_s, d_t, d_o, d_s, d_t, d_o)
    # (a) blocks off the S_I diagonal vanish
    off = t.copy()
    for s in range(d_s):
        off[s, :, :, s, :, :] = 0
    if np.linalg.norm(off) > tol:
        return True
    # (b) diagonal blocks do not depend on the S_I value
    ref = t[0, :, :, 0, :, :]
    for s in range(1, d_s):
        if np.linalg.norm(t[s, :, :, s, :, :] - ref) > tol:
            return True
    return False


def _signals_probe(ch, s_in, s_out, tol):
    """Randomized rank-one probe; exact with probability one.

    No signalling means F(X_S (x) Y_T) = tr(X_S) G(Y_T).  With random
    a, b, a', b' on S and c, e on the rest the difference
    <b'|a'> F(|a><b| (x) |c><e|) - <b|a> F(|a'><b'| (x) |c><e|)
    is a polynomial that vanishes identically exactly when there is no
    signalling.
    """
    rng = rng_from(PROBE_SEED)
    rest_in = [l for l in ch.input.labels if l not in s_in]
    rest_out = [l for l in ch.output.labels if l not in s_out]
    sp_s = ch.input.select(s_in)
    sp_t = ch.input.select(rest_in)
    grouped = ProductSpace(sp_s.factors + sp_t.factors)
    out_order = list(s_out) + rest_out
    d_o = ch.output.select(s_out).dim
    ops = ch.kraus_ops

    def f(x, y):
        kx = np.stack([permute_vector(k @ x, ch.output, out_order) for k in ops]).reshape(len(ops), d_o, -1)
        ky = np.stack([permute_vector(k @ y, ch.output, out_order) for k in ops]).reshape(len(ops), d_o, -1)
        return np.einsum("mor,mpr->op", kx, ky.conj(), optimize=True)

    for _ in range(PROBE_ROUNDS):
        a1, b1, a2, b2 = (random_vector(sp_s.dim, rng) for _ in range(4))
        c, e = random_vector(sp_t.dim, rng), random_vector(sp_t.dim, rng)

        def full(u, w):
            return permute_vector(np.kron(u, w), grouped, ch.input.labels)

        f1 = f(full(a1, c), full(b1, e))
        f2 = f(full(a2, c), full(b2, e))
        diff = np.vdot(b2, a2) * f1 - np.vdot(b1, a1) * f2
        if np.linalg.norm(diff) > tol * max(1.0, np.linalg.norm(f1), np.linalg.norm(f2)):
            return True
    return False


def signals(ch: QuantumChannel, s_in: Iterable[str], s_out: Iterable[str], tol: float = DEFAULT_TOL,
            method: str = "auto") -> bool:
    """True iff the inputs ``s_in`` can influence the marginal on outputs ``s_out``."""
    s_in, s_out = list(s_in), list(s_out)
    if not s_in or not s_out:
        raise ValueError("signalling needs non-empty source and target sets")
    for l in s_in:
        if l not in ch.input:
            side = "an output" if l in ch.output else "unknown"
            raise KeyError(f"source {l!r} is not an input of {ch.name!r} ({side})")
    for l in s_out:
        if l not in ch.output:
            side = "an input" if l in ch.input else "unknown"
            raise KeyError(f"target {l!r} is not an output of {ch.name!r} ({side})")
    if method == "auto":
        size = (ch.d_in * ch.output.select(s_out).dim) ** 2
        method = "exact" if size <= EXACT_LIMIT and (ch.has_choi or ch.d_in * ch.d_out <= 4096) else "probe"
    if method == "exact":
        return _signals_exact(ch, s_in, s_out, tol)
    if method == "probe":
        return _signals_probe(ch, s_in, s_out, tol)
    raise ValueError(f"unknown method {method!r}")


def _node(s) -> frozenset:
    return s if isinstance(s, frozenset) else frozenset(s)


def node_label(node: frozenset) -> str:
    return "{" + ",".join(sorted(node)) + "}"


@dataclass(frozen=True)
class SignallingStructure:
    """Directed graph over subsets of system labels."""

    systems: tuple[str, ...]
    edges: frozenset

    def __post_init__(self):
        object.__setattr__(self, "systems", tuple(self.systems))
        es = frozenset((_node(a), _node(b)) for a, b in self.edges)
        known = set(self.systems)
        for a, b in es:
            if not a or not b:
                raise ValueError("signalling edges need non-empty endpoints")
            if not (a <= known and b <= known):
                raise ValueError(f"edge {node_label(a)}->{node_label(b)} uses unknown systems")
        object.__setattr__(self, "edges", es)

    @classmethod
    def from_pairs(cls, systems, pairs) -> "SignallingStructure":
        """Build from (source, target) pairs whose endpoints are labels or label sets."""
        def as_set(x):
            return frozenset([x]) if isinstance(x, str) else frozenset(x)
        return cls(tuple(systems), frozenset((as_set(a), as_set(b)) for a, b in pairs))

    @property
    def nodes(self) -> frozenset:
        return frozenset(n for e in self.edges for n in e)

    def singleton_edges(self) -> set[tuple[str, str]]:
        return {(next(iter(a)), next(iter(b))) for a, b in self.edges if len(a) == 1 and len(b) == 1}

    def has_edge(self, a, b) -> bool:
        a = frozenset([a]) if isinstance(a, str) else frozenset(a)
        b = frozenset([b]) if isinstance(b, str) else frozenset(b)
        return (a, b) in self.edges

    def union(self, other: "SignallingStructure") -> "SignallingStructure":
        systems = tuple(dict.fromkeys(self.systems + other.systems))
        return SignallingStructure(systems, self.edges | other.edges)

    def sorted_edges(self) -> list[tuple[list[str], list[str]]]:
        return sorted((sorted(a), sorted(b)) for a, b in self.edges)

    def to_dot(self, name: str = "signalling") -> str:
        lines = [f"digraph {name} {{"]
        for a, b in self.sorted_edges():
            lines.append(f'  "{node_label(frozenset(a))}" -> "{node_label(frozenset(b))}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _subsets(labels, cap):
    out = []
    for k in range(1, min(cap, len(labels)) + 1):
        out += [frozenset(c) for c in combinations(labels, k)]
    full = frozenset(labels)
    if labels and full not in out:
        out.append(full)
    return out


def signalling_structure(ch: QuantumChannel, max_subset_size: int = 2, tol: float = DEFAULT_TOL,
                         method: str = "auto") -> SignallingStructure:
    """All relations S_I -> S_O with subsets up to the size cap (plus the full sets).

    One-dimensional factors carry no information and are left out.
    """
    if max_subset_size < 1:
        raise ValueError("max_subset_size must be at least 1")
    ins = [f.label for f in ch.input if f.dim > 1]
    outs = [f.label for f in ch.output if f.dim > 1]
    edges = set()
    for s in _subsets(ins, max_subset_size):
        for t in _subsets(outs, max_subset_size):
            if signals(ch, sorted(s, key=ch.input.labels.index), sorted(t, key=ch.output.labels.index),
                       tol, method):
                edges.add((s, t))
    return SignallingStructure(tuple(ins + outs), frozenset(edges))


def preserves_signalling_under_fine_graining(coarse: QuantumChannel, fine: QuantumChannel,
                                             sys_map: dict[str, SystemSplit], max_subset_size: int = 2,
                                             tol: float = DEFAULT_TOL) -> bool:
    """Every coarse edge S_I -> S_O has the fine edge F(S_I) -> F(S_O)."""
    coarse_sig = signalling_structure(coarse, max_subset_size, tol)
    for s, t in coarse_sig.edges:
        fs = [l for x in coarse.input.labels if x in s for l in sys_map[x].fine_labels]
        ft = [l for x in coarse.output.labels if x in t for l in sys_map[x].fine_labels]
        fs = [l for l in fine.input.labels if l in fs]
        ft = [l for l in fine.output.labels if l in ft]
        if not signals(fine, fs, ft, tol):
            return False
    return True
