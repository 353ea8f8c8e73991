"""Analyses behind the CLI subcommands and the HTTP endpoints.

Each command takes the raw JSON input documents and the flags and returns a
report dict plus named text artifacts (DOT graphs).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from pydantic import BaseModel, ValidationError

from . import schemas
from .channels import QuantumChannel, link, loop, parallel, sequential
from .graphs import DiGraph, recombine, split_loop_nodes, topological_embed
from .nogo import assess, process_signalling_structure, unravel
from .process import (Infeasibility, is_causal_distribution, is_fixed_order, process_to_map,
                      validate_process)
from .qswitch import (SWITCH_ELEMENTAL_EDGES, PAULI, SwitchScenario, born_minus_probability, elemental_signalling,
                      minkowski_protocol, protocol_output_state, single_use_counters,
                      switch_supermap, time_localisation, wqs_output_state)
from .serialization import (channel_from_json, channel_to_json, complex_array, distribution_from_json,
                            embedding_from_json, fraction_to_json, graph_from_json, graph_to_json,
                            process_from_json, signalling_from_json, signalling_to_json, witness_to_json)
from .signalling import signalling_structure
from .spacetime import causality_violation, edges_aligned, maximal_fine_grain
from .tensor import DimensionMismatch


class ScenarioError(ValueError):
    """An input document is malformed or inconsistent; ``errors`` lists (location, message) pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{loc}: {msg}" for loc, msg in errors))


@dataclass
class Flags:
    tol: float = 1e-9
    seed: int = 0
    max_subset: int = 2


@dataclass
class Result:
    report: dict
    artifacts: dict = field(default_factory=dict)


def _parse(model: type[BaseModel], inputs: dict, key: str):
    if key not in inputs:
        raise ScenarioError([(key, "missing input document")])
    try:
        return model.model_validate(inputs[key])
    except ValidationError as e:
        errs = []
        for err in e.errors():
            loc = ".".join(str(x) for x in (key,) + tuple(err["loc"]))
            errs.append((loc, err["msg"]))
        raise ScenarioError(errs) from None


def _domain(key: str, fn: Callable, *args):
    """Build a domain object, turning consistency errors into scenario errors located at ``key``."""
    try:
        return fn(*args)
    except (DimensionMismatch, ValueError, KeyError) as e:
        if isinstance(e, ScenarioError):
            raise
        raise ScenarioError([(key, str(e).strip("'\""))]) from None


def _process(inputs):
    m = _parse(schemas.ProcessModel, inputs, "process")
    return _domain("process", process_from_json, m.model_dump(exclude_none=True))


def _channel(inputs, key="channel"):
    m = _parse(schemas.ChannelModel, inputs, key)
    return _domain(key, channel_from_json, m.model_dump(exclude_none=True))


def _embedding(inputs):
    m = _parse(schemas.EmbeddingModel, inputs, "embedding")
    return _domain("embedding", embedding_from_json, m.model_dump(exclude_none=True))


def cmd_validate(inputs: dict, flags: Flags) -> Result:
    pm = _process(inputs)
    rep = validate_process(pm, tol=flags.tol, seed=flags.seed)
    return Result({"command": "validate", "process": pm.name, **rep.as_dict()})


def _run_step(step, chans):
    ins = [chans[n] for n in step.inputs]
    wires = [tuple(w) for w in step.wires]
    if step.op == "sequential":
        return sequential(ins[0], ins[1], wires or None, name=step.name)
    if step.op == "parallel":
        return parallel(ins[0], ins[1], name=step.name)
    if step.op == "loop":
        return loop(ins[0], wires[0][0], wires[0][1], name=step.name)
    return link(ins, wires, name=step.name)


def cmd_compose(inputs: dict, flags: Flags) -> Result:
    m = _parse(schemas.ComposeModel, inputs, "scenario")
    chans = {}
    for name, c in m.channels.items():
        chans[name] = _domain(f"scenario.channels.{name}", channel_from_json, c.model_dump(exclude_none=True))
    for i, step in enumerate(m.steps):
        missing = [n for n in step.inputs if n not in chans]
        if missing:
            raise ScenarioError([(f"scenario.steps.{i}.inputs", f"unknown channels {missing}")])
        chans[step.name] = _domain(f"scenario.steps.{i}", _run_step, step, chans)
    if m.result not in chans:
        raise ScenarioError([("scenario.result", f"unknown channel {m.result!r}")])
    out = chans[m.result]
    return Result({"command": "compose", "channel": channel_to_json(out, "choi"), "cp": bool(out.is_cp(flags.tol)),
                   "tp_deficit": float(out.tp_deficit)})


def cmd_signalling(inputs: dict, flags: Flags) -> Result:
    if "process" in inputs:
        pm = _process(inputs)
        mode = "universal" if len(pm.parties) <= 4 else "direct"
        sig = process_signalling_structure(pm, tol=flags.tol, mode=mode)
        src = {"process": pm.name, "mode": mode}
    else:
        ch = _channel(inputs)
        sig = signalling_structure(ch, flags.max_subset, flags.tol)
        src = {"channel": ch.name, "max_subset": flags.max_subset}
    return Result({"command": "signalling", **src, "structure": signalling_to_json(sig)},
                  {"signalling.dot": sig.to_dot()})


def cmd_causality(inputs: dict, flags: Flags) -> Result:
    sm = _parse(schemas.SignallingModel, inputs, "signalling")
    sig = _domain("signalling", signalling_from_json, sm.model_dump())
    st, emb, _ = _embedding(inputs)
    missing = [s for s in sig.systems if s not in emb]
    if missing:
        raise ScenarioError([("embedding.embedding", f"systems without a region: {missing}")])
    bad = causality_violation(sig, emb, st)
    return Result({"command": "causality", "causality": bad is None,
                   "violation": None if bad is None else [sorted(bad[0]), sorted(bad[1])]})


def cmd_finegrain(inputs: dict, flags: Flags) -> Result:
    if "graph" in inputs:
        gm = _parse(schemas.GraphModel, inputs, "graph")
        g = _domain("graph", graph_from_json, gm.model_dump(exclude_none=True))
        fine, f = split_loop_nodes(g)
        emb = topological_embed(fine)
        rec = recombine(fine, f)
        return Result({"command": "finegrain", "graph": graph_to_json(fine),
                       "fine_graining": {str(k): sorted(v) for k, v in sorted(f.mapping.items(), key=str)},
                       "acyclic": fine.is_acyclic(), "recombines": rec == g,
                       "embedding": {str(k): v for k, v in sorted(emb.items(), key=lambda t: str(t[0]))}},
                      {"finegrained.dot": fine.to_dot("finegrained")})
    rm = _parse(schemas.RoutingModel, inputs, "routing")
    ch = _domain("routing.channel", channel_from_json, rm.channel.model_dump(exclude_none=True))
    st, emb, _ = _domain("routing.embedding", embedding_from_json, rm.embedding.model_dump(exclude_none=True))
    impl = _domain("routing", maximal_fine_grain, ch, emb, rm.routing, st)
    sig = signalling_structure(impl.channel, 1, flags.tol)
    return Result({"command": "finegrain", "elemental": {k: list(v) for k, v in sorted(impl.elemental.items())},
                   "point_of": dict(sorted(impl.point_of.items())), "fine_grains": True,
                   "misaligned_edges": [list(e) for e in edges_aligned(sig, impl.point_of, st)],
                   "channel": {"input": [list(f) for f in zip(impl.channel.input.labels, impl.channel.input.dims)],
                               "output": [list(f) for f in zip(impl.channel.output.labels,
                                                               impl.channel.output.dims)]}},
                  {"elemental.dot": sig.to_dot("elemental")})


def cmd_fixed_order(inputs: dict, flags: Flags) -> Result:
    pm = _process(inputs)
    w = is_fixed_order(pm, tol=flags.tol)
    return Result({"command": "fixed-order", "process": pm.name, "fixed_order": witness_to_json(w)})


def cmd_causal_dist(inputs: dict, flags: Flags) -> Result:
    _parse(schemas.DistributionModel, inputs, "distribution")
    dist = _domain("distribution", distribution_from_json, inputs["distribution"])
    res = _domain("distribution", is_causal_distribution, dist, None, flags.tol)
    if isinstance(res, Infeasibility):
        rep = {"causal": False, "exact": res.exact, "certificate_verified": res.verified,
               "certificate": None if res.certificate is None else [fraction_to_json(v) for v in res.certificate]}
    else:
        def arr(a):
            return None if a is None else np.vectorize(fraction_to_json, otypes=[object])(a).tolist()
        rep = {"causal": True, "exact": res.exact, "q": fraction_to_json(res.q), "p_ab": arr(res.p_ab),
               "p_ba": arr(res.p_ba)}
    return Result({"command": "causal-dist", **rep})


def cmd_nogo(inputs: dict, flags: Flags) -> Result:
    pm = _process(inputs)
    st, emb, charts = _embedding(inputs)
    mode = "universal" if len(pm.parties) <= 4 else "direct"
    sig = process_signalling_structure(pm, tol=flags.tol, mode=mode)
    missing = [s for s in sig.systems if s not in emb]
    if missing:
        raise ScenarioError([("embedding.embedding", f"systems without a region: {missing}")])
    rep = assess(pm, emb, st, charts, sig=sig, tol=flags.tol)
    d = rep.as_dict()
    art = {"signalling.dot": sig.to_dot()}
    if "signalling_cycle" in d["witness"]:
        cyc = d["witness"]["signalling_cycle"]
        art["cycle.dot"] = DiGraph.from_edges(zip(cyc, cyc[1:])).to_dot("cycle")
    return Result({"command": "nogo", "process": pm.name, **d}, art)


def _drop_trivial(ch: QuantumChannel) -> QuantumChannel:
    ti = [f.label for f in ch.input if f.dim == 1]
    to = [f.label for f in ch.output if f.dim == 1]
    return QuantumChannel.from_kraus(ch.input.without(ti), ch.output.without(to), ch.kraus_ops, name=ch.name)


def cmd_unravel(inputs: dict, flags: Flags) -> Result:
    if "builtin" in inputs:
        which = inputs["builtin"]
        if which not in ("qs", "cs"):
            raise ScenarioError([("builtin", "expected 'qs' or 'cs'")])
        proto = minkowski_protocol(dephased=which == "cs")
        pm, impl, st = proto.process, proto.implementation, proto.spacetime
    else:
        pm = _process(inputs)
        st, emb, _ = _embedding(inputs)
        routing = inputs.get("routing")
        if not isinstance(routing, dict):
            raise ScenarioError([("routing", "expected an object mapping systems to points")])
        coarse = _drop_trivial(process_to_map(pm))
        impl = _domain("routing", maximal_fine_grain, coarse, emb, routing, st)
    res = _domain("routing", unravel, pm, impl, st, None, True, flags.seed, flags.tol)
    return Result({"command": "unravel", "parties": [p.name for p in res.process.parties],
                   "n_parties": len(res.process.parties), "fixed_order": witness_to_json(res.witness),
                   "correspondence": {k: list(v) for k, v in sorted(res.correspondence.items())},
                   "validity": res.validity.as_dict() if res.validity else None})


def _unitary(v, key):
    if isinstance(v, str):
        if v not in PAULI:
            raise ScenarioError([(key, f"unknown gate {v!r}; use one of {sorted(PAULI)}")])
        return PAULI[v]
    return _domain(key, complex_array, v, 2)


def _amp(v, key):
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", ""))
        except ValueError:
            raise ScenarioError([(key, f"{v!r} is not a number")]) from None
    if isinstance(v, list):
        return complex(v[0], v[1])
    return complex(v)


def cmd_switch_demo(inputs: dict, flags: Flags) -> Result:
    m = _parse(schemas.SwitchModel, inputs, "switch")
    a, b = _amp(m.alpha, "switch.alpha"), _amp(m.beta, "switch.beta")
    psi = _domain("switch.psi", complex_array, m.psi, 1)
    s = _domain("switch", SwitchScenario.normalised, a, b, psi, _unitary(m.U, "switch.U"), _unitary(m.V, "switch.V"))
    out = switch_supermap(s)
    contraction = wqs_output_state(s)
    p_minus = born_minus_probability(s)
    proto = minkowski_protocol()
    rho = protocol_output_state(s, proto)
    sig = elemental_signalling(proto, flags.tol)
    return Result({"command": "switch-demo", "alpha": [complex(s.alpha).real, complex(s.alpha).imag],
                   "beta": [complex(s.beta).real, complex(s.beta).imag],
                   "output_state": [[float(z.real), float(z.imag)] for z in out],
                   "contraction_error": float(np.max(np.abs(out - contraction))),
                   "P_minus": round(p_minus, 12), "P_plus": round(1 - p_minus, 12),
                   "protocol_error": float(np.max(np.abs(rho - np.outer(out, out.conj())))),
                   "single_use_counters": {k: round(v, 12) for k, v in single_use_counters(s).items()},
                   "elemental_edges_match": sig.singleton_edges() == set(SWITCH_ELEMENTAL_EDGES),
                   "misaligned_edges": [list(e) for e in edges_aligned(sig, proto.implementation.point_of,
                                                                       proto.spacetime)],
                   "time_localised": time_localisation(proto)},
                  {"elemental.dot": sig.to_dot("elemental")})


COMMANDS = {
    "validate": cmd_validate,
    "compose": cmd_compose,
    "signalling": cmd_signalling,
    "causality": cmd_causality,
    "finegrain": cmd_finegrain,
    "fixed-order": cmd_fixed_order,
    "causal-dist": cmd_causal_dist,
    "nogo": cmd_nogo,
    "unravel": cmd_unravel,
    "switch-demo": cmd_switch_demo,
}


def run(command: str, inputs: dict, flags: Flags | None = None) -> Result:
    if command not in COMMANDS:
        raise ScenarioError([("command", f"unknown command {command!r}")])
    return COMMANDS[command](inputs, flags or Flags())
