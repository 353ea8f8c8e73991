"""Labelled tensor-product spaces and the dense linear algebra used everywhere else.

Operators on a :class:`ProductSpace` are plain ``numpy`` arrays whose row and
column index run over the factors in declaration order (row-major, first
factor most significant), so ``np.kron(a, b)`` lives on ``space_a + space_b``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Iterable, Sequence

import numpy as np

DEFAULT_TOL = 1e-9


class DimensionMismatch(ValueError):
    """Raised when an operator does not fit the space it is paired with."""


@dataclass(frozen=True)
class Factor:
    """One tensor factor: a labelled Hilbert space of dimension ``dim``.

    ``vacuum`` marks a vacuum-extended space whose basis vector 0 is the
    vacuum state and whose remaining vectors carry the message.
    """

    label: str
    dim: int
    vacuum: bool = False

    def __post_init__(self):
        if not isinstance(self.label, str) or not self.label:
            raise ValueError("factor label must be a non-empty string")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"factor {self.label!r}: dimension must be a positive integer")
        if self.vacuum and self.dim < 2:
            raise ValueError(f"factor {self.label!r}: a vacuum-extended space needs dim >= 2")


@dataclass(frozen=True)
class ProductSpace:
    """Ordered tensor product of uniquely labelled factors."""

    factors: tuple[Factor, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        labels = [f.label for f in self.factors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate factor labels in {labels}")

    @classmethod
    def of(cls, *pairs) -> "ProductSpace":
        """Build from ``(label, dim)`` pairs or :class:`Factor` objects."""
        out = []
        for p in pairs:
            out.append(p if isinstance(p, Factor) else Factor(p[0], int(p[1])))
        return cls(tuple(out))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f.label for f in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return prod(self.dims)

    def __len__(self):
        return len(self.factors)

    def __iter__(self):
        return iter(self.factors)

    def __contains__(self, label):
        return label in self.labels

    def __add__(self, other: "ProductSpace") -> "ProductSpace":
        return ProductSpace(self.factors + other.factors)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no factor labelled {label!r} in {list(self.labels)}") from None

    def factor(self, label: str) -> Factor:
        return self.factors[self.index(label)]

    def select(self, labels: Iterable[str]) -> "ProductSpace":
        """Sub-space made of ``labels`` in the order given."""
        return ProductSpace(tuple(self.factor(l) for l in labels))

    def without(self, labels: Iterable[str]) -> "ProductSpace":
        drop = set(labels)
        for l in drop:
            self.index(l)
        return ProductSpace(tuple(f for f in self.factors if f.label not in drop))

    def relabel(self, mapping: dict[str, str]) -> "ProductSpace":
        return ProductSpace(tuple(Factor(mapping.get(f.label, f.label), f.dim, f.vacuum)
                                  for f in self.factors))


def check_operator(m, space: ProductSpace, name: str = "operator") -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.shape != (space.dim, space.dim):
        raise DimensionMismatch(f"{name} has shape {m.shape}, expected {(space.dim, space.dim)}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def kron(*ms) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in ms:
        out = np.kron(out, m)
    return out


def ket(i: int, d: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[i] = 1.0
    return v


def matrix_unit(i: int, j: int, d: int) -> np.ndarray:
    """|i><j| in dimension d."""
    if not (0 <= i < d and 0 <= j < d):
        raise IndexError(f"matrix unit ({i},{j}) out of range for dimension {d}")
    m = np.zeros((d, d), dtype=complex)
    m[i, j] = 1.0
    return m


def max_entangled(d: int) -> np.ndarray:
    """Unnormalised |1>> = sum_i |i>|i>."""
    return np.eye(d, dtype=complex).reshape(d * d)


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def is_hermitian(m, tol: float = DEFAULT_TOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.max(np.abs(m - dagger(m)), initial=0.0) <= tol


def is_psd(m, tol: float = DEFAULT_TOL) -> bool:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"is_psd needs a square matrix, got shape {m.shape}")
    if not is_hermitian(m, tol):
        return False
    if m.shape[0] == 0:
        return True
    return float(np.linalg.eigvalsh((m + dagger(m)) / 2).min()) >= -tol


def partial_trace(m, space: ProductSpace, keep: Iterable[str]) -> np.ndarray:
    """Trace out every factor not in ``keep``; kept factors stay in space order."""
    keep = set(keep)
    for l in keep:
        space.index(l)
    m = check_operator(m, space)
    n = len(space)
    t = m.reshape(space.dims * 2)
    kept = [i for i, f in enumerate(space.factors) if f.label in keep]
    row = list(range(n))
    col = [n + i if i in kept else i for i in range(n)]
    out = kept + [n + i for i in kept]
    r = np.einsum(t, row + col, out)
    d = prod(space.dims[i] for i in kept)
    return r.reshape(d, d)


def permutation_for(space: ProductSpace, order: Sequence[str]) -> list[int]:
    if sorted(order) != sorted(space.labels):
        raise ValueError(f"order {list(order)} is not a permutation of {list(space.labels)}")
    return [space.index(l) for l in order]


def permute_operator(m, space: ProductSpace, order: Sequence[str]) -> np.ndarray:
    """Reorder the factors of an operator on ``space`` to ``order``."""
    perm = permutation_for(space, order)
    n = len(space)
    t = np.asarray(m).reshape(space.dims * 2)
    t = t.transpose(perm + [n + p for p in perm])
    return t.reshape(space.dim, space.dim)


def permute_vector(v, space: ProductSpace, order: Sequence[str]) -> np.ndarray:
    """Reorder the factors of a vector (or of the rows of a column stack)."""
    perm = permutation_for(space, order)
    v = np.asarray(v)
    extra = v.shape[1:]
    t = v.reshape(space.dims + extra)
    t = t.transpose(perm + list(range(len(space), len(space) + len(extra))))
    return t.reshape((space.dim,) + extra)


def expectation_on(rho, space: ProductSpace, label: str, op) -> float:
    """tr[(op on factor ``label``) rho]."""
    red = partial_trace(rho, space, [label])
    return float(np.real(np.trace(np.asarray(op) @ red)))
