"""Process matrices as channels, their composition with local maps and their order properties.

W lives on A_I^1 (x) A_O^1 (x) A_I^2 (x) ... and is the plain Choi matrix of
the process map {A_O^k} -> {A_I^k}.  Local operations enter through their
transposed (local) Choi matrices, so that P(x|a) = tr[(M_{x1|a1} (x) ...) W].
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, permutations, product
from math import prod
from typing import Mapping, Sequence

import numpy as np

from .channels import QuantumChannel, identity, link, state_preparation, to_local_choi, trace_channel
from .lp import exact_feasibility, float_feasibility, verify_certificate
from .sampling import random_kraus, rng_from
from .signalling import signals
from .tensor import (DEFAULT_TOL, DimensionMismatch, Factor, ProductSpace, check_operator, dagger, is_hermitian,
                     is_psd, permute_operator, permute_vector)

DENSE_LIMIT = 4096
SPANNING_BUDGET = 20000


@dataclass(frozen=True)
class Party:
    name: str
    d_in: int
    d_out: int
    d_setting: int = 1
    d_outcome: int = 1
    in_label: str = ""
    out_label: str = ""

    def __post_init__(self):
        for n in ("d_in", "d_out", "d_setting", "d_outcome"):
            if int(getattr(self, n)) < 1:
                raise ValueError(f"party {self.name!r}: {n} must be at least 1")
        if not self.in_label:
            object.__setattr__(self, "in_label", f"{self.name}_I")
        if not self.out_label:
            object.__setattr__(self, "out_label", f"{self.name}_O")

    @property
    def setting_label(self) -> str:
        return f"{self.name}_s"

    @property
    def outcome_label(self) -> str:
        return f"{self.name}_o"

    def with_classical(self, d_setting: int, d_outcome: int) -> "Party":
        return Party(self.name, self.d_in, self.d_out, d_setting, d_outcome, self.in_label, self.out_label)


class ProcessMatrix:
    """W over the interleaved in/out spaces of ``parties``.

    Either a dense ``W`` or a factor ``F`` with W = F F^dag (a vector means a
    pure process).  Large processes are only ever held in factor form.
    """

    def __init__(self, parties: Sequence[Party], W=None, factors=None, name: str = ""):
        self.parties = tuple(parties)
        names = [p.name for p in self.parties]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate party names {names}")
        fs = []
        for p in self.parties:
            fs += [Factor(p.in_label, p.d_in), Factor(p.out_label, p.d_out)]
        self.space = ProductSpace(tuple(fs))
        self.name = name
        if (W is None) == (factors is None):
            raise ValueError("give exactly one of W or factors")
        if W is not None:
            self._W = check_operator(W, self.space, "process matrix")
            self._F = None
        else:
            f = np.asarray(factors, dtype=complex)
            if f.ndim == 1:
                f = f[:, None]
            if f.shape[0] != self.space.dim:
                raise DimensionMismatch(f"factor has {f.shape[0]} rows, process space has dimension {self.space.dim}")
            if not np.all(np.isfinite(f)):
                raise ValueError("factor contains non-finite entries")
            self._F = f
            self._W = None

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def is_factored(self) -> bool:
        return self._F is not None

    @property
    def factors(self) -> np.ndarray:
        if self._F is None:
            w, u = np.linalg.eigh((self._W + dagger(self._W)) / 2)
            keep = w > 1e-12 * max(1.0, abs(w).max())
            self._F = u[:, keep] * np.sqrt(w[keep])
        return self._F

    @property
    def matrix(self) -> np.ndarray:
        if self._W is None:
            if self.dim > DENSE_LIMIT:
                raise MemoryError(f"process of dimension {self.dim} is kept in factor form only")
            self._W = self._F @ self._F.conj().T
        return self._W

    @property
    def trace(self) -> float:
        if self._W is not None:
            return float(np.real(np.trace(self._W)))
        return float(np.sum(np.abs(self._F) ** 2))

    @property
    def expected_trace(self) -> int:
        return prod(p.d_out for p in self.parties)

    def party(self, name: str) -> Party:
        for p in self.parties:
            if p.name == name:
                return p
        raise KeyError(f"no party named {name!r}")

    def index(self, name: str) -> int:
        return [p.name for p in self.parties].index(name)

    def scaled(self, c: float) -> "ProcessMatrix":
        if self._W is not None:
            return ProcessMatrix(self.parties, W=c * self._W, name=self.name)
        return ProcessMatrix(self.parties, factors=np.sqrt(c) * self._F, name=self.name)


def _map_order(parties):
    ins = [p.out_label for p in parties]
    outs = [p.in_label for p in parties]
    return ins, outs


def process_to_map(pm: ProcessMatrix) -> QuantumChannel:
    """The process map {A_O^k} -> {A_I^k} whose plain Choi matrix is W."""
    ins, outs = _map_order(pm.parties)
    inp = pm.space.select(ins)
    out = pm.space.select(outs)
    if pm.is_factored:
        vs = permute_vector(pm.factors, pm.space, ins + outs)
        ops = [v.reshape(inp.dim, out.dim).T for v in vs.T]
        return QuantumChannel.from_kraus(inp, out, ops, name=pm.name or "W")
    j = permute_operator(pm.matrix, pm.space, ins + outs)
    return QuantumChannel.from_choi(inp, out, j, name=pm.name or "W")


def map_to_process(ch: QuantumChannel, parties: Sequence[Party], groups: Mapping | None = None,
                   name: str = "", dense: bool | None = None) -> ProcessMatrix:
    """Package a channel {A_O^k} -> {A_I^k} as a process matrix.

    ``groups`` maps a party name to (input factor labels, output factor labels)
    of the channel that together make up A_I and A_O of that party; by default
    these are the single factors named like the party's labels.
    """
    parties = tuple(parties)
    groups = dict(groups or {})
    out_order, in_order, fac = [], [], []
    for p in parties:
        gi, go = groups.get(p.name, ([p.in_label] if p.in_label in ch.output else [],
                                     [p.out_label] if p.out_label in ch.input else []))
        di = prod(ch.output.factor(l).dim for l in gi)
        do = prod(ch.input.factor(l).dim for l in go)
        if di != p.d_in or do != p.d_out:
            raise DimensionMismatch(f"party {p.name!r}: channel gives dims ({di}, {do}), party has "
                                    f"({p.d_in}, {p.d_out})")
        out_order += gi
        in_order += go
        fac.append((gi, go))
    if sorted(out_order) != sorted(ch.output.labels) or sorted(in_order) != sorted(ch.input.labels):
        raise ValueError("party groups do not cover the channel factors exactly")
    interleaved = [l for gi, go in fac for l in gi + go]
    full = ProductSpace(ch.input.select(in_order).factors + ch.output.select(out_order).factors)
    joint = ProductSpace(ch.input.factors + ch.output.factors)
    use_dense = (ch.has_choi and full.dim <= DENSE_LIMIT) if dense is None else dense
    if use_dense:
        w = permute_operator(ch.choi, joint, interleaved)
        return ProcessMatrix(parties, W=w, name=name)
    vs = np.stack([k.T.reshape(-1) for k in ch.kraus_ops], axis=1)
    vs = permute_vector(vs, joint, interleaved)
    return ProcessMatrix(parties, factors=vs, name=name)


# -- local maps --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExtendedLocalMap:
    """One CPTP map A_I (x) A_s -> A_O (x) A_o encoding all of a party's choices."""

    party: Party
    channel: QuantumChannel

    def __post_init__(self):
        p = self.party
        want_in = {p.in_label: p.d_in, p.setting_label: p.d_setting}
        want_out = {p.out_label: p.d_out, p.outcome_label: p.d_outcome}
        got_in = dict(zip(self.channel.input.labels, self.channel.input.dims))
        got_out = dict(zip(self.channel.output.labels, self.channel.output.dims))
        if got_in != want_in or got_out != want_out:
            raise DimensionMismatch(f"extended map of {p.name!r} acts {got_in} -> {got_out}, "
                                    f"expected {want_in} -> {want_out}")
        ch = self.channel.reorder([p.in_label, p.setting_label], [p.out_label, p.outcome_label])
        object.__setattr__(self, "channel", ch)


@dataclass(frozen=True, eq=False)
class Instrument:
    party: Party
    setting: int
    cp_maps: tuple  # outcome-indexed CP maps A_I -> A_O

    def local_chois(self) -> list[np.ndarray]:
        return [to_local_choi(m) for m in self.cp_maps]


def _party_spaces(p: Party):
    return (ProductSpace.of((p.in_label, p.d_in), (p.setting_label, p.d_setting)),
            ProductSpace.of((p.out_label, p.d_out), (p.outcome_label, p.d_outcome)))


def extended_from_instruments(party: Party, kraus_by_setting, name: str = "") -> ExtendedLocalMap:
    """Extended map from Kraus lists ``kraus_by_setting[a][x]``; settings and outcomes are dephased."""
    n_a = len(kraus_by_setting)
    n_x = max(len(k) for k in kraus_by_setting)
    party = party.with_classical(n_a, n_x)
    ops = []
    for a, inst in enumerate(kraus_by_setting):
        for x, ks in enumerate(inst):
            for k in ks:
                ops.append(np.kron(np.asarray(k, dtype=complex), np.outer(np.eye(n_x)[x], np.eye(n_a)[a])))
    inp, out = _party_spaces(party)
    return ExtendedLocalMap(party, QuantumChannel.from_kraus(inp, out, ops, name=name or party.name))


def extended_from_channel(party: Party, ch: QuantumChannel) -> ExtendedLocalMap:
    """A single CPTP map A_I -> A_O with trivial setting and outcome."""
    party = party.with_classical(1, 1)
    inp, out = _party_spaces(party)
    return ExtendedLocalMap(party, QuantumChannel.from_kraus(inp, out, ch.kraus_ops, name=ch.name))


def extended_from_unitary(party: Party, u) -> ExtendedLocalMap:
    return extended_from_instruments(party, [[[u]]])


def instrument_from_extended(m: ExtendedLocalMap, a: int) -> Instrument:
    """M_{x|a}(rho) = tr_{A_o}[(|x><x| (x) 1) M(rho (x) |a><a|)]."""
    p = m.party
    if not 0 <= a < p.d_setting:
        raise IndexError(f"setting {a} out of range for party {p.name!r}")
    ops = m.channel.kraus_ops.reshape(-1, p.d_out, p.d_outcome, p.d_in, p.d_setting)
    inp = ProductSpace.of((p.in_label, p.d_in))
    out = ProductSpace.of((p.out_label, p.d_out))
    maps = tuple(QuantumChannel.from_kraus(inp, out, list(ops[:, :, x, :, a]), name=f"{p.name}[{x}|{a}]")
                 for x in range(p.d_outcome))
    return Instrument(p, a, maps)


def local_choi_table(m: ExtendedLocalMap) -> np.ndarray:
    """L[a, x] = local Choi matrix of M_{x|a}, shape (d_s, d_o, D, D) with D = d_in d_out."""
    p = m.party
    d = p.d_in * p.d_out
    out = np.zeros((p.d_setting, p.d_outcome, d, d), dtype=complex)
    ops = m.channel.kraus_ops.reshape(-1, p.d_out, p.d_outcome, p.d_in, p.d_setting)
    for a in range(p.d_setting):
        for x in range(p.d_outcome):
            ks = ops[:, :, x, :, a]
            v = np.transpose(ks, (0, 2, 1)).reshape(len(ks), -1)
            out[a, x] = (v.T @ v.conj()).T
    return out


def tomographic_states(d: int) -> list[np.ndarray]:
    """d^2 pure states spanning the Hermitian operators."""
    out = []
    for k in range(d):
        v = np.zeros(d, dtype=complex)
        v[k] = 1
        out.append(v)
    for k in range(d):
        for l in range(k + 1, d):
            for ph in (1, 1j):
                v = np.zeros(d, dtype=complex)
                v[k], v[l] = 1 / np.sqrt(2), ph / np.sqrt(2)
                out.append(v)
    return [np.outer(v, v.conj()) for v in out]


def _psd_sqrt_kraus(e: np.ndarray) -> list[np.ndarray]:
    w, u = np.linalg.eigh(e)
    return [np.sqrt(max(x, 0)) * u[:, i].conj()[None, :] for i, x in enumerate(w) if x > 1e-14]


def informationally_complete_map(party: Party) -> ExtendedLocalMap:
    """Measure-and-prepare map: an IC POVM on A_I and d_out^2 tomographic preparations as settings."""
    states = tomographic_states(party.d_out)
    probes = tomographic_states(party.d_in)
    g = sum(probes)
    w, u = np.linalg.eigh(g)
    g_isqrt = u @ np.diag(w ** -0.5) @ u.conj().T
    povm = [g_isqrt @ r @ g_isqrt for r in probes]
    kraus = []
    for rho in states:
        prep = []
        w2, u2 = np.linalg.eigh(rho)
        for lam, vec in zip(w2, u2.T):
            if lam > 1e-14:
                prep.append(np.sqrt(lam) * vec[:, None])
        inst = []
        for e in povm:
            inst.append([s @ r for s in prep for r in _psd_sqrt_kraus(e)])
        kraus.append(inst)
    return extended_from_instruments(party, kraus, name=f"{party.name}:IC")


def spanning_channels(d_in: int, d_out: int) -> list[np.ndarray]:
    """Plain Choi matrices of CPTP maps whose affine hull is every trace-preserving map.

    Replacement channels plus measure-and-prepare channels
    rho -> tr(P rho) s_j + tr((1-P) rho) s_0, in total d_in^2 (d_out^2 - 1) + 1 maps.
    """
    outs = tomographic_states(d_out)
    projs = [p for p in tomographic_states(d_in)]
    drop = np.zeros((d_in, d_in))
    drop[d_in - 1, d_in - 1] = 1
    projs = [p for p in projs if not np.allclose(p, drop)]
    eye = np.eye(d_in)
    chans = [np.kron(eye, s) for s in outs]
    for p in projs:
        for s in outs[1:]:
            chans.append(np.kron(p.T, s) + np.kron((eye - p).T, outs[0]))
    return chans


# -- composition ---------------------------------------------------------------

def _map_channel(pm, name, m):
    p = pm.party(name)
    if isinstance(m, ExtendedLocalMap):
        if (m.party.in_label, m.party.out_label, m.party.d_in, m.party.d_out) != \
                (p.in_label, p.out_label, p.d_in, p.d_out):
            raise DimensionMismatch(f"map for {name!r} does not match the party's spaces")
        return m.channel, p
    if isinstance(m, QuantumChannel):
        if set(m.input.labels) != {p.in_label} or set(m.output.labels) != {p.out_label}:
            raise DimensionMismatch(f"map for {name!r} must act {p.in_label} -> {p.out_label}")
        return m, p
    raise TypeError(f"map for {name!r} must be an ExtendedLocalMap or a QuantumChannel")


def partial_compose(pm: ProcessMatrix, maps: Mapping, method: str = "auto") -> QuantumChannel:
    """Plug local maps of some parties into the process map, leaving the others open."""
    w = process_to_map(pm)
    chans, wires = [w], []
    for name in [p.name for p in pm.parties if p.name in maps]:
        ch, p = _map_channel(pm, name, maps[name])
        chans.append(ch)
        wires += [(p.in_label, p.in_label), (p.out_label, p.out_label)]
    for name in maps:
        pm.party(name)
    if len(chans) == 1:
        return w
    return link(chans, wires, name="partial", method=method)


def complete_compose(pm: ProcessMatrix, maps: Mapping, method: str = "auto") -> QuantumChannel:
    """The channel {A_s^k} -> {A_o^k} obtained by plugging in every party's extended map."""
    missing = [p.name for p in pm.parties if p.name not in maps]
    if missing:
        raise ValueError(f"no local map for parties {missing}")
    ch = partial_compose(pm, maps, method)
    ins = [maps[p.name].party.setting_label for p in pm.parties]
    outs = [maps[p.name].party.outcome_label for p in pm.parties]
    return ch.reorder(ins, outs)


# -- Born rule -------------------------------------------------------------------

def _contract_locals(pm: ProcessMatrix, tables: Sequence[np.ndarray]) -> np.ndarray:
    """tr[(L_1[b1] (x) ... (x) L_N[bN]) W] for batched local operators L_k[b_k], axes (b1, ..., bN)."""
    n = len(pm.parties)
    dims = [p.d_in * p.d_out for p in pm.parties]
    t = pm.matrix.reshape(dims + dims)
    blocks = []
    for k, tab in enumerate(tables):
        nb = len(tab.shape) - 2
        done = sum(blocks)
        # L[p, q] W[.., q, .., p, ..]; tensordot puts the new batch axes in front
        t = np.tensordot(tab, t, axes=([nb + 1, nb], [done, done + n - k]))
        blocks.append(nb)
    # axes are now (bN, ..., b1); restore party order
    starts = np.cumsum([0] + blocks[::-1])
    perm = []
    for k in range(n):
        j = n - 1 - k
        perm += list(range(starts[j], starts[j] + blocks[k]))
    return t.transpose(perm)


def distribution_trace(pm: ProcessMatrix, maps: Mapping) -> np.ndarray:
    """P[x_1..x_N, a_1..a_N] from tr[(M_{x1|a1} (x) ...) W]."""
    tables = [local_choi_table(maps[p.name]) for p in pm.parties]
    t = _contract_locals(pm, tables)
    n = len(pm.parties)
    # t has axes (a1, x1, a2, x2, ...)
    t = t.transpose([2 * k + 1 for k in range(n)] + [2 * k for k in range(n)])
    return t


def distribution_composition(pm: ProcessMatrix, maps: Mapping):
    """Post-selected statistics of the complete composition and their normalising denominators."""
    ch = complete_compose(pm, maps)
    ds = [maps[p.name].party.d_setting for p in pm.parties]
    do = [maps[p.name].party.d_outcome for p in pm.parties]
    n = len(pm.parties)
    a_sz, x_sz = prod(ds), prod(do)
    jm = ch.choi.reshape(a_sz, x_sz, a_sz, x_sz)
    raw = np.real(np.einsum("axax->xa", jm)).reshape(do + ds)
    denom = raw.reshape(x_sz, *ds).sum(axis=0)
    p = raw / denom[(None,) * n]
    return p, denom


@dataclass
class BornResult:
    trace: np.ndarray
    composition: np.ndarray
    denominator: np.ndarray
    discrepancy: float

    def probabilities(self, settings: Sequence[int]) -> np.ndarray:
        return self.trace[(Ellipsis,) + tuple(settings)]


def born_probabilities(pm: ProcessMatrix, maps: Mapping, settings: Sequence[int] | None = None,
                       tol: float = DEFAULT_TOL) -> BornResult:
    """Outcome statistics by the trace formula and by post-selecting the composed channel."""
    pt = np.real(distribution_trace(pm, maps))
    pc, den = distribution_composition(pm, maps)
    if np.any(pt < -tol):
        raise ValueError("negative probability: the process is not valid for these maps")
    if settings is not None:
        idx = (Ellipsis,) + tuple(settings)
        pt, pc, den = pt[idx], pc[idx], den[tuple(settings)]
    return BornResult(pt, pc, np.asarray(den), float(np.max(np.abs(pt - pc))))


def reduced_process(pm: ProcessMatrix, fixed: Sequence[tuple[str, np.ndarray]]) -> ProcessMatrix:
    """Tr_j[(1 (x) M^j (x) 1) W] for fixed local Choi matrices M^j."""
    fixed = list(fixed)
    if not fixed:
        return pm
    names = [n for n, _ in fixed]
    keep = [p for p in pm.parties if p.name not in names]
    for p in pm.parties:
        d = p.d_in * p.d_out
        m = dict(fixed).get(p.name)
        if m is not None:
            if np.shape(m) != (d, d):
                raise DimensionMismatch(f"operator for {p.name!r} has shape {np.shape(m)}, expected {(d, d)}")
    dims = [p.d_in * p.d_out for p in pm.parties]
    n = len(pm.parties)
    t = pm.matrix.reshape(dims + dims)
    # sum_{p,q} M[p,q] W[.., q, .., p, ..]
    sub_w = list(range(2 * n))
    ops = []
    label = 2 * n
    for name, m in fixed:
        k = pm.index(name)
        p_, q_ = label, label + 1
        label += 2
        sub_w[k], sub_w[n + k] = q_, p_
        ops += [np.asarray(m), [p_, q_]]
    keep_idx = [i for i, p in enumerate(pm.parties) if p.name not in names]
    out = keep_idx + [n + i for i in keep_idx]
    r = np.einsum(t, sub_w, *ops, out)
    d = prod(dims[i] for i in keep_idx)
    return ProcessMatrix(keep, W=r.reshape(d, d), name=pm.name)


# -- signalling between parties ---------------------------------------------------

def device_independent_signals(dist: np.ndarray, i: int, S: Sequence[int], tol: float = DEFAULT_TOL) -> bool:
    """Does the marginal of the outcomes of ``S`` depend on the setting of party ``i``?

    ``dist[x_1..x_N, a_1..a_N]``; parties are referred to by position.
    """
    dist = np.asarray(dist)
    n = dist.ndim // 2
    norms = dist.reshape((-1,) + dist.shape[n:]).sum(axis=0)
    if np.max(np.abs(norms - 1), initial=0) > 1e-7:
        raise ValueError("distribution is not normalised")
    drop = tuple(k for k in range(n) if k not in S)
    marg = dist.sum(axis=drop) if drop else dist
    ax = marg.ndim - n + i
    return bool(np.max(np.ptp(marg, axis=ax), initial=0.0) > tol)


def signalling_verdicts(pm: ProcessMatrix, maps: Mapping, i: str, S: Sequence[str],
                        tol: float = DEFAULT_TOL) -> tuple[bool, bool]:
    """(device-dependent, device-independent) verdicts for A^i signalling to A^S."""
    S = list(S)
    others = {n: m for n, m in maps.items() if n != i and n not in S}
    ch = partial_compose(pm, others)
    pi = pm.party(i)
    dd = signals(ch, [pi.out_label], [pm.party(s).in_label for s in S], tol)
    dist = np.real(distribution_trace(pm, maps))
    di = device_independent_signals(dist, pm.index(i), [pm.index(s) for s in S], tol=1e-9)
    return dd, di


def signalling_equivalence_check(pm: ProcessMatrix, maps: Mapping, i: str, S: Sequence[str],
                                 tol: float = DEFAULT_TOL) -> bool:
    dd, di = signalling_verdicts(pm, maps, i, S, tol)
    return dd == di


# -- fixed order -------------------------------------------------------------------

@dataclass(frozen=True)
class FixedOrderWitness:
    order: tuple[str, ...]           # party names, earliest first
    relations: frozenset             # strict order on system labels
    method: str

    def precedes(self, a: str, b: str) -> bool:
        return (a, b) in self.relations


def chain_relations(pm: ProcessMatrix, order: Sequence[str]) -> frozenset:
    seq = []
    for name in order:
        p = pm.party(name)
        seq += [p.in_label, p.out_label]
    return frozenset((seq[i], seq[j]) for i in range(len(seq)) for j in range(i + 1, len(seq)))


class NoSignallingOracle:
    """Memoised NS(i, S): A_O^i cannot signal to A_I^S for any maps of the remaining parties."""

    def __init__(self, pm: ProcessMatrix, tol: float = DEFAULT_TOL):
        self.pm = pm
        self.tol = tol
        self.cache = {}
        self.families = {p.name: spanning_channels(p.d_in, p.d_out) for p in pm.parties}

    def __call__(self, i: str, S) -> bool:
        S = frozenset(S)
        pm = self.pm
        pi = pm.party(i)
        targets = [s for s in S if pm.party(s).d_in > 1]
        if pi.d_out == 1 or not targets:
            return True
        key = (i, frozenset(targets))
        if key in self.cache:
            return self.cache[key]
        for k, v in self.cache.items():
            if k[0] == i and not v and k[1] <= key[1]:
                self.cache[key] = False
                return False
        others = [p for p in pm.parties if p.name != i and p.name not in S]
        fams = [self.families[p.name] for p in others]
        ok = True
        for combo in product(*[range(len(f)) for f in fams]):
            maps = {}
            for p, f, c in zip(others, fams, combo):
                maps[p.name] = QuantumChannel.from_choi(ProductSpace.of((p.in_label, p.d_in)),
                                                        ProductSpace.of((p.out_label, p.d_out)), f[c])
            ch = partial_compose(pm, maps)
            if signals(ch, [pi.out_label], [pm.party(s).in_label for s in sorted(targets)], self.tol):
                ok = False
                break
        self.cache[key] = ok
        return ok


def _fixed_order_signalling(pm, tol):
    ns = NoSignallingOracle(pm, tol)
    names = [p.name for p in pm.parties]
    for order in permutations(names):
        if all(ns(name, order[:k]) for k, name in enumerate(order)):
            return FixedOrderWitness(tuple(order), chain_relations(pm, order), "signalling")
    return None


def _fixed_order_comb(pm, tol):
    """Order by cuts of the open process map: for each prefix Q ending in party p,
    the outputs of p and every later party must not signal to the inputs of Q."""
    w = process_to_map(pm)
    names = [p.name for p in pm.parties]
    n = len(names)
    memo = {}

    def cut_ok(prefix_mask, p_idx):
        key = (prefix_mask, p_idx)
        if key in memo:
            return memo[key]
        q = [k for k in range(n) if prefix_mask >> k & 1] + [p_idx]
        later = [k for k in range(n) if not (prefix_mask >> k & 1)]
        src = [pm.parties[k].out_label for k in later if pm.parties[k].d_out > 1]
        dst = [pm.parties[k].in_label for k in q if pm.parties[k].d_in > 1]
        ok = True if not src or not dst else not signals(w, src, dst, tol)
        memo[key] = ok
        return ok

    reach = {0: None}
    frontier = [0]
    for _ in range(n):
        nxt = []
        for mask in frontier:
            for k in range(n):
                if mask >> k & 1:
                    continue
                new = mask | (1 << k)
                if new in reach:
                    continue
                if cut_ok(mask, k):
                    reach[new] = (mask, k)
                    nxt.append(new)
        frontier = nxt
    full = (1 << n) - 1
    if full not in reach:
        return None
    order, cur = [], full
    while reach[cur] is not None:
        prev, k = reach[cur]
        order.append(names[k])
        cur = prev
    order = tuple(order[::-1])
    return FixedOrderWitness(order, chain_relations(pm, order), "comb")


def is_fixed_order(pm: ProcessMatrix, method: str = "auto", tol: float = DEFAULT_TOL):
    """A witnessing strict order on the in/out systems, or None.

    The ``signalling`` route enumerates party orders and decides each
    no-signalling condition by partial compositions with spanning families of
    local channels (up to four parties).  The ``comb`` route checks the cuts of
    the open process map, a sufficient condition that scales to more parties.
    """
    if method == "auto":
        method = "signalling" if len(pm.parties) <= 4 else "comb"
    if method == "signalling":
        if len(pm.parties) > 4:
            raise ValueError("the signalling route is limited to four parties; use method='comb'")
        return _fixed_order_signalling(pm, tol)
    if method == "comb":
        return _fixed_order_comb(pm, tol)
    raise ValueError(f"unknown method {method!r}")


# -- causal distributions --------------------------------------------------------------

@dataclass
class CausalDecomposition:
    q: object
    p_ab: np.ndarray   # P^{A<B}(x, y | a, b) (normalised, or None when q = 0)
    p_ba: np.ndarray
    exact: bool


@dataclass
class Infeasibility:
    certificate: list | None
    exact: bool
    verified: bool = False   # certificate re-checked in exact arithmetic


def _causal_constraints(shape):
    nx_, ny, na, nb = shape
    cells = [(x, y, a, b) for x in range(nx_) for y in range(ny) for a in range(na) for b in range(nb)]
    pos = {c: k for k, c in enumerate(cells)}
    m = len(cells)
    rows = []

    def row():
        return [0] * (2 * m)

    for c in cells:          # P1 + P2 = P
        r = row()
        r[pos[c]] = 1
        r[m + pos[c]] = 1
        rows.append((r, ("sum", c)))
    for x in range(nx_):     # P1: Alice's marginal does not depend on b
        for a in range(na):
            for b in range(1, nb):
                r = row()
                for y in range(ny):
                    r[pos[(x, y, a, b)]] += 1
                    r[pos[(x, y, a, 0)]] -= 1
                rows.append((r, ("nsB", x, a, b)))
    for y in range(ny):      # P2: Bob's marginal does not depend on a
        for b in range(nb):
            for a in range(1, na):
                r = row()
                for x in range(nx_):
                    r[m + pos[(x, y, a, b)]] += 1
                    r[m + pos[(x, y, 0, b)]] -= 1
                rows.append((r, ("nsA", y, a, b)))
    for a in range(na):      # weight of P1 equal for every (a, b)
        for b in range(nb):
            if (a, b) == (0, 0):
                continue
            r = row()
            for x in range(nx_):
                for y in range(ny):
                    r[pos[(x, y, a, b)]] += 1
                    r[pos[(x, y, 0, 0)]] -= 1
            rows.append((r, ("w", a, b)))
    return cells, pos, rows


def is_causal_distribution(dist, exact: bool | None = None, tol: float = DEFAULT_TOL):
    """Decompose bipartite P(xy|ab) = q P^{A<B} + (1-q) P^{B<A}, or certify that no such split exists.

    Rational input (an object array of Fractions or ints) is decided in exact
    arithmetic by default.  Floating-point input is decided by the float LP,
    since rounding noise can make a one-way distribution exactly infeasible; an
    infeasible verdict is then backed by an exact certificate for the rounded
    values when one exists.  Returns a :class:`CausalDecomposition` or an
    :class:`Infeasibility` with a Farkas certificate.
    """
    if isinstance(dist, np.ndarray) and dist.dtype != object:
        arr = np.asarray(dist, dtype=float)
    else:
        arr = np.asarray(dist, dtype=object)
    if arr.ndim != 4:
        raise ValueError("expected a bipartite distribution P[x, y, a, b]")
    shape = arr.shape
    sums = arr.sum(axis=(0, 1))
    if any(abs(float(s) - 1) > 1e-9 for s in np.ravel(sums)):
        raise ValueError("distribution is not normalised")
    rational = arr.dtype == object and all(isinstance(v, (Fraction, int)) for v in arr.ravel())
    small = prod(shape) <= 16 * 4
    if exact is None:
        exact = rational and small
    cells, pos, rows = _causal_constraints(shape)
    m = len(cells)
    A = [r for r, _ in rows]
    def rational_rhs():
        return [arr[c] if isinstance(arr[c], Fraction) else Fraction(arr[c]).limit_denominator(10 ** 12)
                for c in cells] + [Fraction(0)] * (len(rows) - m)

    if exact:
        b = rational_rhs()
        res = exact_feasibility(A, b)
    else:
        b = [float(arr[c]) for c in cells] + [0.0] * (len(rows) - m)
        res = float_feasibility(A, b, tol)
        if not res.feasible and small:
            b_exact = rational_rhs()
            ex = exact_feasibility(A, b_exact)
            if not ex.feasible:
                return Infeasibility(ex.certificate, True, verify_certificate(A, b_exact, ex.certificate))
    if not res.feasible:
        ok = exact and verify_certificate(A, b, res.certificate)
        return Infeasibility(res.certificate, exact, ok)
    x = res.x
    p1 = np.array([x[pos[c]] for c in cells], dtype=object).reshape(shape)
    p2 = np.array([x[m + pos[c]] for c in cells], dtype=object).reshape(shape)
    q = sum(p1[:, :, 0, 0].ravel())
    if not exact:
        p1, p2, q = p1.astype(float), p2.astype(float), float(q)
    n1 = p1 / q if q else None
    n2 = p2 / (1 - q) if q != 1 else None
    return CausalDecomposition(q, n1, n2, exact)


# -- validity --------------------------------------------------------------------------

@dataclass
class ValidityReport:
    hermitian: bool
    psd: bool
    trace: float
    expected_trace: int
    trace_ok: bool
    spanning_checked: bool
    spanning_max_deviation: float | None
    random_max_deviation: float
    entangled_max_deviation: float
    n_random: int
    failures: list = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return {"hermitian": self.hermitian, "psd": self.psd, "trace": self.trace,
                "expected_trace": self.expected_trace, "trace_ok": self.trace_ok,
                "spanning_checked": self.spanning_checked,
                "spanning_max_deviation": self.spanning_max_deviation,
                "random_max_deviation": self.random_max_deviation,
                "entangled_max_deviation": self.entangled_max_deviation,
                "n_random": self.n_random, "failures": list(self.failures),
                "verdict": "consistent" if self.consistent else "inconsistent"}


def _expectation(pm: ProcessMatrix, ops: Mapping) -> complex:
    """tr[(O) W] where ``ops`` maps a tuple of party names to an operator on their joint space."""
    dims = [p.d_in * p.d_out for p in pm.parties]
    n = len(dims)
    f = pm.factors
    r = f.shape[1]
    t = f.reshape(dims + [r])
    orig = t
    for names, op in ops.items():
        ks = [pm.index(nm) for nm in names]
        dd = [dims[k] for k in ks]
        op_t = np.asarray(op).reshape(dd + dd)
        # apply op on axes ks
        t = np.tensordot(op_t, t, axes=(list(range(len(ks), 2 * len(ks))), ks))
        rest = [k for k in range(n + 1) if k not in ks]
        # tensordot puts new axes first; move them back
        order = [0] * (n + 1)
        for pos_, k in enumerate(ks):
            order[k] = pos_
        for pos_, k in enumerate(rest):
            order[k] = len(ks) + pos_
        t = np.transpose(t, order)
    return complex(np.sum(orig.conj() * t))


def _random_product_locals(pm, rng):
    out = {}
    for p in pm.parties:
        ks = random_kraus(p.d_in, p.d_out, rng, rank=2)
        ch = QuantumChannel.from_kraus(ProductSpace.of(("i", p.d_in)), ProductSpace.of(("o", p.d_out)), ks)
        out[(p.name,)] = to_local_choi(ch)
    return out


def _random_entangled_pair(pj: Party, pk: Party, rng) -> np.ndarray:
    """Local Choi of tr_anc[(N_j (x) N_k)(. (x) phi+)] on (A_I^j A_O^j A_I^k A_O^k)."""
    aj, ak = "anc_j", "anc_k"
    nj = QuantumChannel.from_kraus(ProductSpace.of(("Ij", pj.d_in), (aj, 2)), ProductSpace.of(("Oj", pj.d_out)),
                                   random_kraus(2 * pj.d_in, pj.d_out, rng, rank=2))
    nk = QuantumChannel.from_kraus(ProductSpace.of(("Ik", pk.d_in), (ak, 2)), ProductSpace.of(("Ok", pk.d_out)),
                                   random_kraus(2 * pk.d_in, pk.d_out, rng, rank=2))
    phi = np.zeros(4)
    phi[0] = phi[3] = 1 / np.sqrt(2)
    prep = state_preparation(np.outer(phi, phi), ProductSpace.of(("a1", 2), ("a2", 2)))
    joint = link([prep, nj, nk], [("a1", aj), ("a2", ak)], method="choi")
    joint = joint.reorder(["Ij", "Ik"], ["Oj", "Ok"])
    space = ProductSpace.of(("Ij", pj.d_in), ("Ik", pk.d_in), ("Oj", pj.d_out), ("Ok", pk.d_out))
    j = permute_operator(joint.choi, space, ["Ij", "Oj", "Ik", "Ok"])
    return j.T


def validate_process(pm: ProcessMatrix, tol: float = DEFAULT_TOL, n_random: int = 64, seed: int = 0,
                     spanning_budget: int = SPANNING_BUDGET) -> ValidityReport:
    """Necessary conditions for validity plus normalisation on many local strategies.

    Normalisation tr[(M_1 (x) ... (x) M_N) W] = 1 is tested on products of
    spanning channel families when affordable (which decides it for all
    product maps, and by affinity for all non-signalling joint maps), on
    ``n_random`` random product channels, and on random pairs of channels that
    share an entangled ancilla.
    """
    rng = rng_from(seed)
    failures = []
    if pm.is_factored:
        herm, psd = True, True
    else:
        herm = is_hermitian(pm.matrix, tol)
        psd = is_psd(pm.matrix, tol) if herm else False
    if not herm:
        failures.append("not Hermitian")
    if not psd:
        failures.append("not positive semidefinite")
    tr = pm.trace
    tr_ok = abs(tr - pm.expected_trace) <= tol * max(1, pm.expected_trace)
    if not tr_ok:
        failures.append(f"trace {tr:.12g} differs from product of output dimensions {pm.expected_trace}")

    spanning_checked, span_dev = False, None
    fams = [spanning_channels(p.d_in, p.d_out) for p in pm.parties]
    if prod(len(f) for f in fams) <= spanning_budget and pm.dim <= DENSE_LIMIT:
        tables = [np.array([m.T for m in f]) for f in fams]
        vals = _contract_locals(pm, tables)
        span_dev = float(np.max(np.abs(vals - 1)))
        spanning_checked = True
        if span_dev > tol * 10:
            failures.append(f"normalisation fails on a spanning product family (max deviation {span_dev:.3g})")

    rand_dev = 0.0
    for _ in range(n_random):
        rand_dev = max(rand_dev, abs(_expectation(pm, _random_product_locals(pm, rng)) - 1))
    if rand_dev > tol * 10:
        failures.append(f"normalisation fails on random product channels (max deviation {rand_dev:.3g})")

    ent_dev = 0.0
    parties = list(pm.parties)
    for j, k in combinations(range(len(parties)), 2):
        locs = _random_product_locals(pm, rng)
        del locs[(parties[j].name,)]
        del locs[(parties[k].name,)]
        locs[(parties[j].name, parties[k].name)] = _random_entangled_pair(parties[j], parties[k], rng)
        ent_dev = max(ent_dev, abs(_expectation(pm, locs) - 1))
    if ent_dev > tol * 10:
        failures.append(f"normalisation fails with entangled ancillas (max deviation {ent_dev:.3g})")

    return ValidityReport(bool(herm), bool(psd), float(tr), pm.expected_trace, bool(tr_ok), spanning_checked,
                          None if span_dev is None else float(span_dev), float(rand_dev),
                          float(ent_dev), n_random, failures)


def verify_causal_separable_decomposition(pm: ProcessMatrix, q: float, pm1: ProcessMatrix, pm2: ProcessMatrix,
                                          tol: float = DEFAULT_TOL) -> bool:
    """W = q W1 + (1-q) W2 with W1 ordered A before B and W2 ordered B before A."""
    if len(pm.parties) != 2:
        raise ValueError("causal separability is checked for two parties")
    if not 0 <= q <= 1:
        return False
    if np.linalg.norm(pm.matrix - q * pm1.matrix - (1 - q) * pm2.matrix) > tol:
        return False
    a, b = pm.parties[0].name, pm.parties[1].name
    if q > 0:
        ns = NoSignallingOracle(pm1, tol)
        if not (ns(a, []) and ns(b, [a])):
            return False
    if q < 1:
        ns = NoSignallingOracle(pm2, tol)
        if not (ns(b, []) and ns(a, [b])):
            return False
    return True


# -- builders ------------------------------------------------------------------------------

def sequential_process(parties: Sequence[Party], channels: Sequence[QuantumChannel], name: str = "") -> ProcessMatrix:
    """Fixed-order process from a circuit.

    ``channels[0]`` prepares the first input (and any memory), ``channels[k]``
    maps the k-th party's output (and memory) to the next input (and memory),
    and the last channel consumes the final output.  Labels must match the
    party labels; memory labels are wired by name.
    """
    wires = []
    outs = {l for c in channels for l in c.output.labels}
    ins = {l for c in channels for l in c.input.labels}
    party_labels = {l for p in parties for l in (p.in_label, p.out_label)}
    for l in sorted(outs & ins):
        if l not in party_labels:
            wires.append((l, l))
    ch = link(list(channels), wires, name=name or "pipe", method="choi")
    return map_to_process(ch, parties, name=name)


def two_party_order(first: Party, second: Party, state=None, name: str = "") -> ProcessMatrix:
    """first's input gets ``state`` (|0> by default), first's output goes to second's input,
    second's output is discarded.  Parties are listed in the order (A, B) = (first, second)
    sorted by name."""
    if first.d_out != second.d_in:
        raise DimensionMismatch("first output and second input must have equal dimension")
    if state is None:
        state = np.zeros((first.d_in, first.d_in))
        state[0, 0] = 1
    prep = state_preparation(state, ProductSpace.of((first.in_label, first.d_in)))
    wire = identity(ProductSpace.of((first.out_label, first.d_out)), ProductSpace.of((second.in_label, second.d_in)))
    tr = trace_channel(ProductSpace.of((second.out_label, second.d_out)))
    ch = link([prep, wire, tr], [], method="choi")
    parties = sorted([first, second], key=lambda p: p.name)
    return map_to_process(ch, parties, name=name or f"{first.name}<{second.name}")


def classical_switch(a: Party | None = None, b: Party | None = None) -> tuple[ProcessMatrix, ProcessMatrix, ProcessMatrix]:
    """(W_CS, W_{A<B}, W_{B<A}) with W_CS the equal mixture."""
    a = a or Party("A", 2, 2)
    b = b or Party("B", 2, 2)
    w1 = two_party_order(a, b)
    w2 = two_party_order(b, a)
    w = ProcessMatrix(w1.parties, W=(w1.matrix + w2.matrix) / 2, name="CS")
    return w, w1, w2


def random_fixed_order_process(dims: Sequence[tuple[int, int]], rng, order: Sequence[int] | None = None,
                               memory: int = 2, names: Sequence[str] | None = None) -> ProcessMatrix:
    """Random process realised as a circuit with a memory wire, in the given party order."""
    rng = rng_from(rng)
    n = len(dims)
    names = list(names or [chr(ord("A") + k) for k in range(n)])
    parties = [Party(names[k], dims[k][0], dims[k][1]) for k in range(n)]
    order = list(order) if order is not None else list(rng.permutation(n))
    chans = []
    first = parties[order[0]]
    out = ProductSpace.of((first.in_label, first.d_in), ("M0", memory))
    chans.append(state_preparation(_rand_density(out.dim, rng), out))
    for step in range(n - 1):
        p, q = parties[order[step]], parties[order[step + 1]]
        inp = ProductSpace.of((p.out_label, p.d_out), (f"M{step}", memory))
        outp = ProductSpace.of((q.in_label, q.d_in), (f"M{step + 1}", memory))
        chans.append(QuantumChannel.from_kraus(inp, outp, random_kraus(inp.dim, outp.dim, rng, rank=2)))
    last = parties[order[-1]]
    chans.append(trace_channel(ProductSpace.of((last.out_label, last.d_out), (f"M{n - 1}", memory))))
    return sequential_process(parties, chans, name="random-pipe")


def _rand_density(d, rng):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    r = g @ g.conj().T
    return r / np.trace(r)


def random_instrument_map(party: Party, n_settings: int, n_outcomes: int, rng) -> ExtendedLocalMap:
    from .sampling import random_instrument_kraus
    rng = rng_from(rng)
    return extended_from_instruments(party, [random_instrument_kraus(party.d_in, party.d_out, n_outcomes, rng)
                                             for _ in range(n_settings)])
