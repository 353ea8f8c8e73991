import numpy as np
import pytest
from hypothesis import given, strategies as st

from causalembed.tensor import (DimensionMismatch, Factor, ProductSpace, is_hermitian, is_psd, kron, ket,
                                max_entangled, partial_trace, permute_operator, permute_vector)
from oracles import ptrace, rand_state


def test_product_space_dims_and_labels():
    sp = ProductSpace.of(("A", 2), ("B", 3), Factor("C", 4, vacuum=True))
    assert sp.labels == ("A", "B", "C")
    assert sp.dims == (2, 3, 4)
    assert sp.dim == 24
    assert sp.select(["C", "A"]).labels == ("C", "A")
    assert sp.without(["B"]).labels == ("A", "C")


@pytest.mark.parametrize("bad", [("", 2), ("A", 0), ("A", 1.5)])
def test_factor_rejects_bad_values(bad):
    with pytest.raises(ValueError):
        Factor(*bad)


def test_vacuum_factor_needs_two_levels():
    with pytest.raises(ValueError):
        Factor("A", 1, vacuum=True)


def test_duplicate_labels_rejected():
    with pytest.raises(ValueError):
        ProductSpace.of(("A", 2), ("A", 3))


def test_partial_trace_wrong_shape():
    with pytest.raises(DimensionMismatch):
        partial_trace(np.eye(5), ProductSpace.of(("A", 2), ("B", 3)), ["A"])


def test_kron_and_ket():
    assert np.allclose(kron(ket(1, 2), ket(0, 3)), ket(3, 6))
    assert np.allclose(max_entangled(3), sum(kron(ket(i, 3), ket(i, 3)) for i in range(3)))


def test_psd_checks():
    assert is_psd(np.diag([1.0, 0.0]))
    assert not is_psd(np.diag([1.0, -0.1]))
    assert not is_hermitian(np.array([[0, 1], [0, 0]]))


@given(st.lists(st.integers(1, 3), min_size=1, max_size=4), st.integers(0, 2 ** 32 - 1), st.data())
def test_partial_trace_matches_oracle(dims, seed, data):
    rng = np.random.default_rng(seed)
    labels = [f"S{i}" for i in range(len(dims))]
    sp = ProductSpace.of(*zip(labels, dims))
    rho = rand_state(sp.dim, rng)
    keep = data.draw(st.sets(st.sampled_from(range(len(dims)))))
    got = partial_trace(rho, sp, [labels[i] for i in keep])
    assert np.allclose(got, ptrace(rho, dims, sorted(keep)), atol=1e-12)


@given(st.permutations(range(3)), st.integers(0, 2 ** 32 - 1))
def test_permute_operator_consistent_with_vector(perm, seed):
    rng = np.random.default_rng(seed)
    sp = ProductSpace.of(("A", 2), ("B", 3), ("C", 2))
    v = rng.normal(size=12) + 1j * rng.normal(size=12)
    order = [sp.labels[i] for i in perm]
    pv = permute_vector(v, sp, order)
    po = permute_operator(np.outer(v, v.conj()), sp, order)
    assert np.allclose(po, np.outer(pv, pv.conj()))
    back = permute_vector(pv, ProductSpace.of(*[(l, sp.factor(l).dim) for l in order]), sp.labels)
    assert np.allclose(back, v)
