"""Process signalling structures, the three-assumption no-go check and unravelling into fixed-order processes."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .channels import QuantumChannel
from .graphs import DiGraph, acyclic_order
from .process import (FixedOrderWitness, NoSignallingOracle, Party, ProcessMatrix, is_fixed_order,
                      map_to_process, partial_compose, process_to_map, validate_process)
from .signalling import SignallingStructure, node_label, signalling_structure, signals
from .spacetime import (CoordinateChart, ElementalImplementation, Spacetime, as_region, causality_violation,
                        edges_aligned, elemental_label, pairwise_correspondence, region_cycle, time_localised)
from .tensor import DEFAULT_TOL


class TheoremViolation(AssertionError):
    """Raised when a run contradicts one of the no-go theorems; carries a counterexample dump."""

    def __init__(self, message: str, dump: dict):
        super().__init__(message)
        self.dump = dump


def _intra_edges(pm):
    return {(frozenset([p.in_label]), frozenset([p.out_label])) for p in pm.parties if p.d_in > 1 and p.d_out > 1}


def _systems(pm):
    return tuple(l for p in pm.parties for l, d in ((p.in_label, p.d_in), (p.out_label, p.d_out)) if d > 1)


def process_signalling_structure(pm: ProcessMatrix, max_subset_size: int | None = None, tol: float = DEFAULT_TOL,
                                 mode: str = "universal") -> SignallingStructure:
    """Signalling structure over the in/out systems of the parties.

    Each party contributes A_I -> A_O (its extended map can encode any
    input-dependent output).  In ``universal`` mode an edge A_O^i -> A_I^S is
    present when some choice of local maps of the remaining parties lets A_O^i
    signal to A_I^S; target sets range over all subsets by default, which makes
    acyclicity of the structure equivalent to the fixed-order property.  In
    ``direct`` mode the inter-party edges are the singleton relations of the
    open process map, which scales to more parties.
    """
    n = len(pm.parties)
    edges = set(_intra_edges(pm))
    if mode == "universal":
        if n > 4:
            raise ValueError("the universal structure is limited to four parties; use mode='direct'")
        cap = n - 1 if max_subset_size is None else max_subset_size
        ns = NoSignallingOracle(pm, tol)
        for p in pm.parties:
            if p.d_out == 1:
                continue
            others = [q for q in pm.parties if q.name != p.name and q.d_in > 1]
            for k in range(1, min(cap, len(others)) + 1):
                for S in combinations(others, k):
                    if not ns(p.name, [q.name for q in S]):
                        edges.add((frozenset([p.out_label]), frozenset(q.in_label for q in S)))
    elif mode == "direct":
        w = process_to_map(pm)
        for p in pm.parties:
            if p.d_out == 1:
                continue
            for q in pm.parties:
                if q.d_in > 1 and signals(w, [p.out_label], [q.in_label], tol):
                    edges.add((frozenset([p.out_label]), frozenset([q.in_label])))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return SignallingStructure(_systems(pm), frozenset(edges))


def signalling_cycle(sig: SignallingStructure) -> list | None:
    """A directed cycle among the singleton edges, as a label list with the first label repeated."""
    g = DiGraph.from_edges(sig.singleton_edges(), sig.systems)
    return g.find_cycle()


@dataclass
class NogoReport:
    fixed_order: FixedOrderWitness | None
    relativistic_causality_ok: bool
    cycle_free_ok: bool
    witness: dict = field(default_factory=dict)
    localised: bool = False
    time_localised_in: dict = field(default_factory=dict)
    structure_acyclic: bool | None = None

    @property
    def excluded_combination(self) -> bool:
        """True when the three assumptions hold together, which the no-go theorem rules out."""
        return self.fixed_order is None and self.relativistic_causality_ok and self.cycle_free_ok

    def as_dict(self) -> dict:
        fo = None
        if self.fixed_order is not None:
            fo = {"order": list(self.fixed_order.order), "method": self.fixed_order.method,
                  "relations": sorted([list(r) for r in self.fixed_order.relations])}
        return {"fixed_order": fo, "causality": self.relativistic_causality_ok, "cycle_free": self.cycle_free_ok,
                "localised": self.localised, "time_localised_in": dict(sorted(self.time_localised_in.items())),
                "structure_acyclic": self.structure_acyclic, "witness": self.witness}


def assess(pm: ProcessMatrix, emb: Mapping, st: Spacetime, charts: Sequence[CoordinateChart] = (),
           sig: SignallingStructure | None = None, tol: float = DEFAULT_TOL,
           fixed_order_method: str = "auto") -> NogoReport:
    """Evaluate fixed order, relativistic causality and cycle-freeness together.

    ``emb`` maps every in/out system label of a party with dimension above one
    to its region.  Raises :class:`TheoremViolation` if all three hold.
    """
    if sig is None:
        sig = process_signalling_structure(pm, tol=tol, mode="universal" if len(pm.parties) <= 4 else "direct")
    regions = {}
    for s in sig.systems:
        if s not in emb:
            raise KeyError(f"system {s!r} has no region")
        regions[s] = as_region(emb[s], st)
    witness = {}
    fo = is_fixed_order(pm, method=fixed_order_method, tol=tol)
    if fo is None:
        cyc = signalling_cycle(sig)
        if cyc:
            witness["signalling_cycle"] = cyc
    bad = causality_violation(sig, regions, st)
    if bad is not None:
        witness["causality_violation"] = [node_label(bad[0]), node_label(bad[1])]
    rc = region_cycle(list(regions.values()), st)
    if rc is not None:
        witness["region_cycle"] = rc
    report = NogoReport(fo, bad is None, rc is None, witness,
                        localised=all(len(r) == 1 for r in regions.values()),
                        time_localised_in={c.agent: all(time_localised(r, c) for r in regions.values())
                                           for c in charts},
                        structure_acyclic=acyclic_order(sig) is not None)
    if report.excluded_combination:
        raise TheoremViolation("fixed order fails while causality and cycle-freeness both hold",
                               {"report": report.as_dict(), "structure": sig.sorted_edges(),
                                "embedding": {k: sorted(v) for k, v in sorted(regions.items())}})
    return report


# -- unravelling ------------------------------------------------------------------------

@dataclass
class UnravelResult:
    process: ProcessMatrix
    witness: FixedOrderWitness
    correspondence: dict           # fine party -> (coarse party, input point, output point)
    composed: QuantumChannel | None = None
    validity: object | None = None


def _fine_party_name(party: str, point: str) -> str:
    return f"{party}@{point}"


def unravel(pm: ProcessMatrix, impl: ElementalImplementation, st: Spacetime,
            fine_local_maps: Mapping | None = None, validate: bool = True, seed: int = 0,
            tol: float = DEFAULT_TOL) -> UnravelResult:
    """Package an elemental implementation of the process map as a process over more parties.

    Each party splits into one party per input point, paired with an output
    point by a pairwise correspondence.  The result must be a fixed-order
    process; a failure raises :class:`TheoremViolation`.  An implementation
    whose elemental signalling runs against the spacetime order does not meet
    the premise and raises ValueError instead.  ``fine_local_maps``
    (fine party name -> channel between its elemental systems) are composed in
    after checking that they keep the vacuum fixed.
    """
    ch = impl.channel
    bad = edges_aligned(signalling_structure(ch, 1, tol), impl.point_of, st)
    if bad:
        raise ValueError("the implementation is not relativistically causal; elemental edges against the order: "
                         + ", ".join(f"{a} -> {b}" for a, b in bad))
    parties, groups, corr = [], {}, {}
    for p in pm.parties:
        in_reg = impl.embedding.get(p.in_label) if p.d_in > 1 else None
        out_reg = impl.embedding.get(p.out_label) if p.d_out > 1 else None
        if p.d_in > 1 and in_reg is None or p.d_out > 1 and out_reg is None:
            raise KeyError(f"party {p.name!r} has an unembedded system")
        if in_reg is not None and out_reg is not None:
            pairs = pairwise_correspondence(in_reg, out_reg, st)
            if pairs is None:
                raise ValueError(f"no pairwise correspondence for party {p.name!r}")
        elif in_reg is not None:
            pairs = {q: None for q in sorted(in_reg)}
        elif out_reg is not None:
            pairs = {None: q for q in sorted(out_reg)}
        else:
            pairs = {None: None}
        for pi, po in sorted(pairs.items(), key=lambda t: (str(t[0]), str(t[1]))):
            anchor = pi if pi is not None else po
            name = _fine_party_name(p.name, anchor) if anchor is not None else p.name
            il = elemental_label(p.in_label, pi) if pi is not None else elemental_label(p.in_label, anchor or "-")
            ol = elemental_label(p.out_label, po) if po is not None else elemental_label(p.out_label, anchor or "-")
            di = ch.output.factor(il).dim if pi is not None else 1
            do = ch.input.factor(ol).dim if po is not None else 1
            parties.append(Party(name, di, do, in_label=il, out_label=ol))
            groups[name] = ([il] if pi is not None else [], [ol] if po is not None else [])
            corr[name] = (p.name, pi, po)
    fine = map_to_process(ch, parties, groups, name=f"{pm.name or 'W'}~unravelled")
    fo = is_fixed_order(fine, method="auto" if len(parties) <= 4 else "comb", tol=tol)
    if fo is None:
        raise TheoremViolation("unravelled process is not fixed order",
                               {"parties": [p.name for p in parties], "correspondence": corr})
    validity = validate_process(fine, seed=seed) if validate else None
    if validity is not None and not validity.consistent:
        raise TheoremViolation("unravelled process fails validation", {"failures": validity.failures})
    composed = None
    if fine_local_maps:
        for name, m in fine_local_maps.items():
            _check_vacuum(m)
        composed = partial_compose(fine, dict(fine_local_maps))
    return UnravelResult(fine, fo, corr, composed, validity)


def _check_vacuum(ch: QuantumChannel, tol: float = 1e-9):
    """A fine local map must send the all-vacuum input to the all-vacuum output."""
    if not all(f.vacuum for f in ch.input) or not all(f.vacuum for f in ch.output):
        return
    vin = np.zeros((ch.d_in, ch.d_in))
    vin[0, 0] = 1
    out = sum(k @ vin @ k.conj().T for k in ch.kraus_ops)
    if abs(out[0, 0] - 1) > tol:
        raise ValueError(f"local map {ch.name!r} does not keep the vacuum fixed")


def report_json(report: NogoReport) -> str:
    return json.dumps(report.as_dict(), sort_keys=True, indent=2)
