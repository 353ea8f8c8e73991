import pytest

from causalembed import nogo
from causalembed.channels import QuantumChannel
from causalembed.graphs import acyclic_order
from causalembed.nogo import (TheoremViolation, assess, process_signalling_structure, report_json,
                              signalling_cycle, unravel)
from causalembed.process import classical_switch, is_fixed_order, process_to_map
from causalembed.qswitch import (QS_EMBEDDING, build_wqs, build_wqs_friend, switch_spacetime,
                                 friend_embedding, minkowski_protocol, mutated_points)
from causalembed.spacetime import Spacetime, as_region, maximal_fine_grain
from oracles import has_cycle
from suite import random_embedding, scenarios, timeline_embedding


def qs_regions(points=None):
    st = switch_spacetime(points)
    return st, {k: as_region(v, st) for k, v in QS_EMBEDDING.items()}


@pytest.fixture(scope="module")
def wqs_sig():
    return process_signalling_structure(build_wqs())


def test_switch_structure_has_the_four_cycle(wqs_sig):
    e = wqs_sig.singleton_edges()
    assert {("A_I", "A_O"), ("A_O", "B_I"), ("B_I", "B_O"), ("B_O", "A_I")} <= e
    cyc = signalling_cycle(wqs_sig)
    assert cyc[0] == cyc[-1] and all(edge in e for edge in zip(cyc, cyc[1:]))


def test_switch_in_minkowski_is_causal_but_not_cycle_free(wqs_sig):
    st, emb = qs_regions()
    rep = assess(build_wqs(), emb, st, sig=wqs_sig)
    assert (rep.fixed_order, rep.relativistic_causality_ok, rep.cycle_free_ok) == (None, True, False)
    assert "region_cycle" in rep.witness and "signalling_cycle" in rep.witness
    assert not rep.excluded_combination


def test_single_chart_forces_a_causality_violation(wqs_sig):
    st, emb = qs_regions(mutated_points())
    rep = assess(build_wqs(), emb, st, sig=wqs_sig)
    assert rep.fixed_order is None and rep.cycle_free_ok and not rep.relativistic_causality_ok


def test_fixed_order_process_on_a_worldline():
    _, ab, _ = classical_switch()
    st, emb = timeline_embedding(ab, ["A", "B"])
    rep = assess(ab, emb, st)
    assert rep.fixed_order is not None and rep.relativistic_causality_ok and rep.cycle_free_ok
    assert rep.localised and rep.structure_acyclic
    # reversed placement breaks causality only
    st, emb = timeline_embedding(ab, ["B", "A"])
    rep = assess(ab, emb, st)
    assert rep.fixed_order is not None and not rep.relativistic_causality_ok


def test_friend_embeddings():
    pm = build_wqs_friend()
    sig = process_signalling_structure(pm, mode="direct")
    for constrained, want in ((True, (None, False, False)), (False, (None, True, False))):
        st, emb = friend_embedding(constrained)
        rep = assess(pm, emb, st, sig=sig)
        assert (rep.fixed_order, rep.relativistic_causality_ok, rep.cycle_free_ok) == want


def test_excluded_combination_raises(monkeypatch):
    _, ab, _ = classical_switch()
    st, emb = timeline_embedding(ab, ["A", "B"])
    monkeypatch.setattr(nogo, "is_fixed_order", lambda *a, **k: None)
    with pytest.raises(TheoremViolation) as e:
        assess(ab, emb, st)
    assert e.value.dump["report"]["causality"] and e.value.dump["report"]["cycle_free"]


@pytest.mark.parametrize("name,pm", scenarios()[:6], ids=[n for n, _ in scenarios()[:6]])
def test_structure_acyclic_iff_fixed_order(name, pm):
    sig = process_signalling_structure(pm)
    assert (acyclic_order(sig) is not None) == (is_fixed_order(pm) is not None)
    assert has_cycle(sig.systems, list(sig.singleton_edges())) == (signalling_cycle(sig) is not None)


def test_random_embeddings_never_hit_the_excluded_combination(rng):
    for name, pm in scenarios()[:8]:
        sig = process_signalling_structure(pm)
        for _ in range(5):
            st, emb = random_embedding(pm, rng)
            rep = assess(pm, emb, st, sig=sig)
            assert not rep.excluded_combination


def test_unravel_builtin_switch():
    proto = minkowski_protocol()
    res = unravel(proto.process, proto.implementation, proto.spacetime)
    assert len(res.process.parties) == 6
    assert res.validity.consistent
    assert res.witness is not None
    assert {v[0] for v in res.correspondence.values()} == {"A", "B", "C", "D"}


def test_unravel_of_fixed_order_process_with_split_regions():
    _, ab, _ = classical_switch()
    st = Spacetime.minkowski({"a_in": (0.0, 0.0), "a_out": (1.0, 0.0), "b_in1": (3.0, 1.0), "b_out1": (4.0, 1.0),
                              "b_in2": (3.0, -1.5), "b_out2": (4.0, -1.5)})
    emb = {"A_I": frozenset({"a_in"}), "A_O": frozenset({"a_out"}), "B_I": frozenset({"b_in1", "b_in2"}),
           "B_O": frozenset({"b_out1", "b_out2"})}
    impl = maximal_fine_grain(process_to_map(ab), emb, {"A_I": "a_in", "A_O": "a_out", "B_I": "b_in1",
                                                         "B_O": "b_out1"}, st)
    res = unravel(ab, impl, st)
    assert len(res.process.parties) == 3
    assert res.validity.consistent


def test_unravel_refuses_acausal_routing():
    pm = build_wqs()
    st, emb = qs_regions()
    routing = {"C_O": "P_C", "A_I": "P_I2", "A_O": "P_O2", "B_I": "Q_I1", "B_O": "Q_O1", "D_I": "P_D"}
    ch = process_to_map(pm)
    # C has no input and D no output; drop those trivial wires
    ch = QuantumChannel.from_kraus(ch.input.without([f.label for f in ch.input if f.dim == 1]),
                                   ch.output.without([f.label for f in ch.output if f.dim == 1]), ch.kraus_ops)
    impl = maximal_fine_grain(ch, emb, routing, st)
    with pytest.raises(ValueError, match="not relativistically causal"):
        unravel(pm, impl, st)


def test_report_json_is_sorted_and_stable(wqs_sig):
    st, emb = qs_regions()
    rep = assess(build_wqs(), emb, st, sig=wqs_sig)
    assert report_json(rep) == report_json(assess(build_wqs(), emb, st, sig=wqs_sig))
    assert '"cycle_free": false' in report_json(rep)
