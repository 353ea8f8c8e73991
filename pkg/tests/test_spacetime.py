import numpy as np
import pytest
from hypothesis import given, strategies as st

from causalembed.channels import identity
from causalembed.signalling import SignallingStructure, signalling_structure
from causalembed.spacetime import (Spacetime, boosted_chart, causality_violation, chart, edges_aligned,
                                   is_cycle_free, maximal_fine_grain, pairwise_correspondence, region_cycle,
                                   region_precedes, relativistic_causality, single_use_split, time_localised)
from causalembed.tensor import ProductSpace
from oracles import bijection_exists, closure, lightcone

coords = st.tuples(*[st.integers(-4, 4).map(float)] * 3)


@st.composite
def point_sets(draw, max_points=6):
    pts = draw(st.lists(coords, min_size=1, max_size=max_points, unique=True))
    return {f"p{i}": c for i, c in enumerate(pts)}


@given(point_sets())
def test_minkowski_order_matches_lightcone(points):
    stm = Spacetime.minkowski(points)
    want = {(p, q) for p in points for q in points if p != q and lightcone(points[p], points[q])}
    assert set(stm.order) == want


@given(point_sets(), st.floats(-0.9, 0.9))
def test_boosts_respect_the_order(points, v):
    stm = Spacetime.minkowski(points)
    c = boosted_chart("obs", stm, v)
    assert all(c.time(p) < c.time(q) for p, q in stm.order)


def test_from_relations_closes_transitively():
    stm = Spacetime.from_relations("abcd", [("a", "b"), ("b", "c")])
    assert set(stm.order) == closure("abcd", [("a", "b"), ("b", "c")])
    with pytest.raises(ValueError):
        Spacetime.from_relations("ab", [("a", "b"), ("b", "a")])


def test_invalid_orders_rejected():
    with pytest.raises(ValueError):
        Spacetime(frozenset("ab"), frozenset({("a", "a")}))
    with pytest.raises(ValueError):
        Spacetime(frozenset("abc"), frozenset({("a", "b"), ("b", "c")}))
    with pytest.raises(KeyError):
        Spacetime.chain("ab").precedes("a", "z")


def test_chart_must_respect_order():
    stm = Spacetime.chain(["a", "b"])
    with pytest.raises(ValueError):
        chart("x", {"a": (1.0,), "b": (0.0,)}, stm)
    with pytest.raises(ValueError):
        boosted_chart("x", stm, 0.1)


@given(st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_pairwise_correspondence_matches_bijection_oracle(n, seed):
    rng = np.random.default_rng(seed)
    ev = [f"a{i}" for i in range(n)] + [f"b{i}" for i in range(n)]
    pairs = [(f"a{i}", f"b{j}") for i in range(n) for j in range(n) if rng.random() < 0.5]
    stm = Spacetime.from_relations(ev, pairs)
    a, b = ev[:n], ev[n:]
    got = pairwise_correspondence(a, b, stm)
    assert (got is not None) == bijection_exists(a, b, stm.order)
    if got is not None:
        assert sorted(got.values()) == sorted(b)
        assert all((p, q) in stm.order for p, q in got.items())


def test_region_order_and_cycles():
    stm = Spacetime.minkowski({"p1": (0, 0), "p2": (2, 0), "q1": (1, 5), "q2": (3, 5)})
    # each region's early point precedes nothing in the other; the late ones are spacelike too
    assert not region_precedes({"p1"}, {"q1", "q2"}, stm)
    stm2 = Spacetime.minkowski({"p1": (0, 0), "p2": (10, 5), "q1": (0, 5), "q2": (10, 0)})
    assert region_precedes({"p1", "p2"}, {"q1", "q2"}, stm2)
    assert region_precedes({"q1", "q2"}, {"p1", "p2"}, stm2)
    assert region_cycle([{"p1", "p2"}, {"q1", "q2"}], stm2) is not None
    assert is_cycle_free([{"p1"}, {"p2"}, {"q1"}, {"q2"}], stm2)


def test_identity_causality_timelike_and_spacelike():
    sig = SignallingStructure.from_pairs(["S_I", "S_O"], [("S_I", "S_O")])
    stm = Spacetime.minkowski({"p": (0, 0), "q": (2, 1), "r": (0.5, 3)})
    assert relativistic_causality(sig, {"S_I": {"p"}, "S_O": {"q"}}, stm)
    assert not relativistic_causality(sig, {"S_I": {"p"}, "S_O": {"r"}}, stm)
    assert causality_violation(sig, {"S_I": {"p"}, "S_O": {"r"}}, stm) == (frozenset({"S_I"}), frozenset({"S_O"}))


def test_cyclic_signalling_needs_a_region_cycle():
    sig = SignallingStructure.from_pairs(["X", "Y"], [("X", "Y"), ("Y", "X")])
    stm = Spacetime.minkowski({"x1": (0, 0), "x2": (10, 5), "y1": (0, 5), "y2": (10, 0)})
    assert relativistic_causality(sig, {"X": {"x1", "x2"}, "Y": {"y1", "y2"}}, stm)
    assert not relativistic_causality(sig, {"X": {"x1"}, "Y": {"y2"}}, stm)


def test_time_localisation():
    stm = Spacetime.minkowski({"a": (1, 0), "b": (1, 4), "c": (2, 0)})
    alice = boosted_chart("alice", stm, 0.0)
    bob = boosted_chart("bob", stm, 0.5)
    assert time_localised({"a", "b"}, alice)
    assert not time_localised({"a", "b"}, bob)
    assert not time_localised({"a", "c"}, alice)


def test_single_use_split_subspaces():
    s = single_use_split("S", 2, ["p", "q"])
    assert s.fine_labels == ("S^{p}", "S^{q}")
    dec = s.decoder()
    assert dec.shape == (9, 4) and np.allclose(dec.conj().T @ dec, np.eye(4))


def test_maximal_fine_grain_of_routed_identity():
    ch = identity(ProductSpace.of(("S_I", 2)), ProductSpace.of(("S_O", 2)))
    stm = Spacetime.minkowski({"p": (0, 0), "q1": (2, 1), "q2": (3, -1)})
    impl = maximal_fine_grain(ch, {"S_I": {"p"}, "S_O": {"q1", "q2"}}, {"S_I": "p", "S_O": "q2"}, stm)
    assert impl.channel.output.labels == ("S_O^{q1}", "S_O^{q2}")
    sig = signalling_structure(impl.channel, 1)
    assert sig.singleton_edges() == {("S_I^{p}", "S_O^{q2}")}
    assert edges_aligned(sig, impl.point_of, stm) == []


def test_maximal_fine_grain_rejects_bad_routing():
    ch = identity(ProductSpace.of(("S_I", 2)), ProductSpace.of(("S_O", 2)))
    stm = Spacetime.minkowski({"p": (0, 0), "q": (2, 1)})
    with pytest.raises(ValueError):
        maximal_fine_grain(ch, {"S_I": {"p"}, "S_O": {"q"}}, {"S_I": "q", "S_O": "q"}, stm)
    with pytest.raises(ValueError):
        maximal_fine_grain(ch, {"S_I": {"p"}, "S_O": {"q"}}, {"S_I": "p"}, stm)


def test_misaligned_routing_is_reported():
    ch = identity(ProductSpace.of(("S_I", 2)), ProductSpace.of(("S_O", 2)))
    stm = Spacetime.minkowski({"p": (0, 0), "q": (2, 5)})
    impl = maximal_fine_grain(ch, {"S_I": {"p"}, "S_O": {"q"}}, {"S_I": "p", "S_O": "q"}, stm)
    assert edges_aligned(signalling_structure(impl.channel, 1), impl.point_of, stm) == [("S_I^{p}", "S_O^{q}")]
