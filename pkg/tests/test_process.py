import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causalembed.channels import QuantumChannel, to_local_choi
from causalembed.process import (Party, ProcessMatrix, born_probabilities, classical_switch,
                                 device_independent_signals, distribution_trace, extended_from_instruments,
                                 instrument_from_extended, is_fixed_order, local_choi_table, map_to_process,
                                 partial_compose, process_to_map, random_fixed_order_process,
                                 random_instrument_map, reduced_process, signalling_verdicts,
                                 spanning_channels, validate_process, verify_causal_separable_decomposition)
from causalembed.tensor import ProductSpace, partial_trace
from oracles import born_dense, rand_kraus

seeds = st.integers(0, 2 ** 32 - 1)


def random_setup(seed, n):
    rng = np.random.default_rng(seed)
    pm = random_fixed_order_process([(2, 2)] * n, rng)
    # two settings, two outcomes: each setting splits a rank-two channel's Kraus pair into two CP maps
    kraus = {}
    for p in pm.parties:
        kraus[p.name] = []
        for _ in range(2):
            ks = rand_kraus(2, 2, rng, rank=2)
            kraus[p.name].append([[ks[0]], [ks[1]]])
    maps = {p.name: extended_from_instruments(p, kraus[p.name]) for p in pm.parties}
    return pm, maps, kraus


@settings(max_examples=15)
@given(seeds, st.integers(2, 3))
def test_born_rule_matches_dense_oracle(seed, n):
    pm, maps, kraus = random_setup(seed, n)
    got = np.real(distribution_trace(pm, maps))
    want = born_dense(pm.matrix, [(p.d_in, p.d_out) for p in pm.parties], [kraus[p.name] for p in pm.parties])
    assert np.allclose(got, want, atol=1e-10)
    assert np.allclose(got.reshape(-1, *got.shape[n:]).sum(axis=0), 1)


@settings(max_examples=15)
@given(seeds, st.integers(2, 3))
def test_trace_and_composition_routes_agree(seed, n):
    pm, maps, _ = random_setup(seed, n)
    br = born_probabilities(pm, maps)
    assert br.discrepancy <= 1e-9
    assert np.allclose(br.denominator, 1)


@settings(max_examples=15)
@given(seeds, st.integers(2, 3))
def test_reduced_process_is_partial_composition(seed, n):
    rng = np.random.default_rng(seed)
    pm = random_fixed_order_process([(2, 2)] * n, rng)
    fixed = pm.parties[:n - 1]
    chans = {p.name: QuantumChannel.from_kraus(ProductSpace.of((p.in_label, 2)), ProductSpace.of((p.out_label, 2)),
                                               rand_kraus(2, 2, rng)) for p in fixed}
    red = reduced_process(pm, [(name, to_local_choi(ch)) for name, ch in chans.items()])
    comp = partial_compose(pm, chans)
    want = process_to_map(red)
    comp = comp.reorder(want.input.labels, want.output.labels)
    assert np.linalg.norm(comp.choi - want.choi) <= 1e-9


def test_process_map_round_trip(rng):
    pm = random_fixed_order_process([(2, 2), (2, 3)], rng)
    back = map_to_process(process_to_map(pm), pm.parties)
    assert np.allclose(back.matrix, pm.matrix)


def test_instrument_round_trip(rng):
    p = Party("A", 2, 2)
    m = random_instrument_map(p, 2, 3, rng)
    tab = local_choi_table(m)
    for a in range(2):
        inst = instrument_from_extended(m, a)
        assert np.allclose(np.array(inst.local_chois()), tab[a])
        total = sum(c.choi for c in inst.cp_maps)
        # the outcome-summed map is trace preserving
        space = ProductSpace.of(("A_I", 2), ("A_O", 2))
        assert np.allclose(partial_trace(total, space, ["A_I"]), np.eye(2))


def test_classical_switch_and_fixed_orders():
    cs, ab, ba = classical_switch()
    w = is_fixed_order(ab)
    assert w is not None and w.order == ("A", "B") and w.precedes("A_O", "B_I")
    assert is_fixed_order(ba).order == ("B", "A")
    assert is_fixed_order(cs) is None
    assert verify_causal_separable_decomposition(cs, 0.5, ab, ba)
    assert not verify_causal_separable_decomposition(cs, 0.3, ab, ba)
    for p in (cs, ab, ba):
        assert validate_process(p, n_random=8).consistent


@pytest.mark.parametrize("n", [2, 3])
def test_random_pipes_are_fixed_order_by_both_routes(n, rng):
    order = list(rng.permutation(n))
    pm = random_fixed_order_process([(2, 2)] * n, rng, order=order)
    names = [pm.parties[k].name for k in order]
    for method in ("signalling", "comb"):
        w = is_fixed_order(pm, method=method)
        assert w is not None
        pos = {x: i for i, x in enumerate(w.order)}
        # a generic pipe signals forward along its order, so the witness must follow it
        assert all(pos[a] < pos[b] for a, b in zip(names, names[1:]))


def test_validation_catches_bad_processes(rng):
    pm = random_fixed_order_process([(2, 2), (2, 2)], rng)
    assert validate_process(pm, n_random=8).consistent
    rep = validate_process(pm.scaled(1.1), n_random=8)
    assert not rep.consistent and not rep.trace_ok
    # maximally mixed inputs and no communication
    assert validate_process(ProcessMatrix(pm.parties, W=np.eye(16) / 4), n_random=8).consistent
    # A's output correlated with its own input: positive with the right trace, but not normalised
    loop = ProcessMatrix(pm.parties, W=np.eye(16) / 4 + _self_loop_term())
    rep = validate_process(loop, n_random=8)
    assert rep.psd and rep.trace_ok and not rep.consistent


def _self_loop_term():
    """Z on A_I and A_O; factor order A_I, A_O, B_I, B_O."""
    z, i2 = np.diag([1.0, -1.0]), np.eye(2)
    return np.kron(np.kron(np.kron(z, z), i2), i2) / 8


def test_spanning_family_counts():
    assert len(spanning_channels(2, 2)) == 4 * 3 + 1
    for j in spanning_channels(2, 3):
        space = ProductSpace.of(("i", 2), ("o", 3))
        assert np.allclose(partial_trace(j, space, ["i"]), np.eye(2))


@pytest.mark.parametrize("seed", range(3))
def test_signalling_verdicts_agree_on_pipes(seed):
    pm, maps, _ = random_setup(seed, 2)
    for i, s in (("A", ["B"]), ("B", ["A"])):
        dd, di = signalling_verdicts(pm, maps, i, s)
        assert dd == di


def test_device_independent_signals():
    p = np.zeros((2, 2, 2, 2))
    for a in range(2):
        for b in range(2):
            p[b, a, a, b] = 1
    assert device_independent_signals(p, 0, [1])
    assert device_independent_signals(p, 1, [0])
    q = np.zeros((2, 2, 2, 2))
    for a in range(2):
        for b in range(2):
            q[0, a, a, b] = 1
    assert device_independent_signals(q, 0, [1]) and not device_independent_signals(q, 1, [0])
    with pytest.raises(ValueError):
        device_independent_signals(q * 2, 0, [1])


def test_process_rejects_bad_inputs():
    with pytest.raises(ValueError):
        ProcessMatrix([Party("A", 2, 2), Party("A", 2, 2)], W=np.eye(16))
    with pytest.raises(ValueError):
        ProcessMatrix([Party("A", 2, 2)])
    with pytest.raises(Exception):
        ProcessMatrix([Party("A", 2, 2)], W=np.eye(3))
