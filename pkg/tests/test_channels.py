import numpy as np
import pytest
from hypothesis import given, strategies as st

from causalembed.channels import (QuantumChannel, WiringError, apply, apply_pure, classical_function,
                                  identity, identity_split, is_fine_graining_of, link, loop, parallel,
                                  replacement, restrict_to_message, sequential, state_preparation,
                                  to_local_choi, from_local_choi, trace_channel, unitary_channel,
                                  vacuum_extend, basis_split, reduce_kraus)
from causalembed.tensor import ProductSpace
from oracles import apply_kraus, choi_from_kraus, compose_kraus, rand_kraus, rand_state, rand_unitary

seeds = st.integers(0, 2 ** 32 - 1)
dims = st.integers(1, 3)


def chan(ks, inp, din, out, dout):
    return QuantumChannel.from_kraus(ProductSpace.of((inp, din)), ProductSpace.of((out, dout)), ks)


@given(dims, dims, seeds)
def test_choi_matches_loop_oracle(di, do, seed):
    rng = np.random.default_rng(seed)
    ks = rand_kraus(di, do, rng)
    ch = chan(ks, "X", di, "Y", do)
    assert np.allclose(ch.choi, choi_from_kraus(ks, di), atol=1e-12)
    assert ch.is_cp() and ch.is_tp(1e-9)


@given(dims, dims, seeds)
def test_choi_and_kraus_forms_act_alike(di, do, seed):
    rng = np.random.default_rng(seed)
    ks = rand_kraus(di, do, rng)
    a = chan(ks, "X", di, "Y", do)
    b = QuantumChannel.from_choi(a.input, a.output, a.choi)
    rho = rand_state(di, rng)
    want = apply_kraus(ks, rho)
    assert np.allclose(apply(a, rho), want, atol=1e-12)
    assert np.allclose(apply(b, rho), want, atol=1e-12)


@given(dims, dims, seeds)
def test_apply_pure(di, do, seed):
    rng = np.random.default_rng(seed)
    ks = rand_kraus(di, do, rng)
    psi = rng.normal(size=di) + 1j * rng.normal(size=di)
    psi /= np.linalg.norm(psi)
    got = apply_pure(chan(ks, "X", di, "Y", do), psi)
    assert np.allclose(got, apply_kraus(ks, np.outer(psi, psi.conj())), atol=1e-12)


@given(dims, dims, dims, seeds, st.sampled_from(["choi", "kraus"]))
def test_sequential_equals_kraus_product(d1, d2, d3, seed, method):
    rng = np.random.default_rng(seed)
    k1, k2 = rand_kraus(d1, d2, rng), rand_kraus(d2, d3, rng)
    a, b = chan(k1, "X", d1, "Y", d2), chan(k2, "Y2", d2, "Z", d3)
    got = sequential(a, b, [("Y", "Y2")], method=method)
    assert np.linalg.norm(got.choi - choi_from_kraus(compose_kraus(k1, k2), d1)) < 1e-9


@given(dims, dims, seeds)
def test_loop_of_parallel_is_sequential(d1, d2, seed):
    rng = np.random.default_rng(seed)
    k1, k2 = rand_kraus(d1, d2, rng), rand_kraus(d2, d1, rng)
    par = parallel(chan(k1, "X", d1, "Y", d2), chan(k2, "Y2", d2, "Z", d1))
    got = loop(par, "Y", "Y2")
    assert got.input.labels == ("X",) and got.output.labels == ("Z",)
    assert np.linalg.norm(got.choi - choi_from_kraus(compose_kraus(k1, k2), d1)) < 1e-9


def test_parallel_is_tensor_product(rng):
    k1, k2 = rand_kraus(2, 3, rng), rand_kraus(3, 2, rng)
    par = parallel(chan(k1, "A", 2, "B", 3), chan(k2, "C", 3, "D", 2))
    r1, r2 = rand_state(2, rng), rand_state(3, rng)
    assert np.allclose(apply(par, np.kron(r1, r2)), np.kron(apply_kraus(k1, r1), apply_kraus(k2, r2)))


def test_self_loop_of_swap_is_identity():
    sw = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            sw[2 * j + i, 2 * i + j] = 1
    ch = QuantumChannel.from_kraus(ProductSpace.of(("X", 2), ("Y", 2)), ProductSpace.of(("U", 2), ("V", 2)), [sw])
    out = loop(ch, "V", "Y")
    assert np.allclose(out.choi, choi_from_kraus([np.eye(2)], 2))


def test_choi_and_kraus_links_agree(rng):
    k1, k2 = rand_kraus(2, 4, rng), rand_kraus(2, 2, rng)
    a = QuantumChannel.from_kraus(ProductSpace.of(("X", 2)), ProductSpace.of(("Y", 2), ("M", 2)), k1)
    b = chan(k2, "Y2", 2, "Z", 2)
    c1 = link([a, b], [("Y", "Y2")], method="choi")
    c2 = link([a, b], [("Y", "Y2")], method="kraus")
    assert c1.output.labels == c2.output.labels
    assert np.allclose(c1.choi, c2.choi, atol=1e-12)


def test_wiring_errors():
    a = identity(ProductSpace.of(("X", 2)), ProductSpace.of(("Y", 2)))
    b = identity(ProductSpace.of(("Z", 3)), ProductSpace.of(("W", 3)))
    with pytest.raises(WiringError):
        sequential(a, b, [("Y", "Z")])
    with pytest.raises(WiringError):
        loop(a, "Q", "X")
    with pytest.raises(WiringError):
        sequential(a, b)


def test_elementary_channels(rng):
    sp2 = ProductSpace.of(("X", 2))
    rho = rand_state(2, rng)
    u = rand_unitary(2, rng)
    assert np.allclose(apply(unitary_channel(u, sp2, ProductSpace.of(("Y", 2))), rho), u @ rho @ u.conj().T)
    sigma = rand_state(3, rng)
    assert np.allclose(apply(replacement(sigma, sp2, ProductSpace.of(("Y", 3))), rho), sigma)
    prep = state_preparation(sigma, ProductSpace.of(("Y", 3)))
    assert prep.d_in == 1 and np.allclose(apply(prep, np.ones((1, 1))), sigma)
    assert np.allclose(apply(trace_channel(sp2), rho), [[1.0]])
    nott = classical_function(lambda v: (1 - v[0],), sp2, ProductSpace.of(("Y", 2)))
    assert np.allclose(apply(nott, np.diag([1.0, 0.0])), np.diag([0.0, 1.0]))


def test_local_choi_round_trip(rng):
    ks = rand_kraus(2, 3, rng)
    ch = chan(ks, "X", 2, "Y", 3)
    m = to_local_choi(ch)
    assert np.allclose(m, ch.choi.T)
    assert np.allclose(from_local_choi(ch.input, ch.output, m).choi, ch.choi)


def test_vacuum_extension_keeps_vacuum_and_message(rng):
    u = rand_unitary(2, rng)
    ch = unitary_channel(u, ProductSpace.of(("X", 2)), ProductSpace.of(("Y", 2)))
    ext = vacuum_extend(ch)
    assert ext.d_in == 3 and ext.d_out == 3 and ext.input.factors[0].vacuum
    vac = np.zeros((3, 3))
    vac[0, 0] = 1
    assert np.allclose(apply(ext, vac), vac)
    rho = rand_state(2, rng)
    big = np.zeros((3, 3), dtype=complex)
    big[1:, 1:] = rho
    assert np.allclose(apply(ext, big)[1:, 1:], u @ rho @ u.conj().T)
    assert np.allclose(restrict_to_message(ext).choi, ch.choi)


def test_fine_graining_identity_and_basis_split(rng):
    ks = rand_kraus(2, 2, rng)
    ch = chan(ks, "X", 2, "Y", 2)
    sys_map = {"X": identity_split("X", 2), "Y": identity_split("Y", 2)}
    assert is_fine_graining_of(ch, ch, sys_map)
    other = chan(rand_kraus(2, 2, rng), "X", 2, "Y", 2)
    assert not is_fine_graining_of(other, ch, sys_map)
    # the output qubit spread over a vacuum-extended copy: value v lives on level v+1
    ext = vacuum_extend(ch, ["Y"])
    split = basis_split(["Y"], [3], [[(1,)], [(2,)]])
    assert is_fine_graining_of(ext, ch, {"X": identity_split("X", 2), "Y": split})


@given(st.integers(1, 12), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
def test_reduce_kraus_keeps_the_map(n, d_out, d_in, seed):
    rng = np.random.default_rng(seed)
    ks = rng.normal(size=(n, d_out, d_in)) + 1j * rng.normal(size=(n, d_out, d_in))
    red = reduce_kraus(ks)
    assert red.shape[0] <= min(n, d_out * d_in)
    assert np.allclose(choi_from_kraus(list(red), d_in), choi_from_kraus(list(ks), d_in))
