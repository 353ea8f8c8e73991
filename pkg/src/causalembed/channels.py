"""Quantum channels between labelled product spaces and their composition.

A channel stores its Choi matrix in the plain convention

    J = sum_ij |i><j| (x) Phi(|i><j|)      (input factors first, then output)

and/or a list of Kraus operators.  Either representation is produced lazily
from the other.  Large channels (the elemental switch implementation acts on
729-dimensional spaces) are only ever held as Kraus operators.

Local operations inside the process framework use the transposed Choi matrix;
:func:`to_local_choi` and :func:`from_local_choi` are the only places where
that transpose happens.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product
from math import prod
from typing import Iterable, Sequence

import numpy as np

from .tensor import (DEFAULT_TOL, DimensionMismatch, Factor, ProductSpace, check_operator,
                     dagger, is_psd, partial_trace, permute_operator, permute_vector)
from .sampling import rng_from, random_vector

# Choi matrices above this size are not built unless asked for explicitly.
CHOI_LIMIT = 4096


class WiringError(ValueError):
    """Raised when a composition refers to missing or mismatched wires."""


class QuantumChannel:
    """A completely positive map ``input -> output``.

    Construct through :meth:`from_choi` or :meth:`from_kraus`.  Loop
    composition can produce trace-decreasing maps; these are kept as they are
    and :attr:`tp_deficit` reports how far from trace preserving they are.
    """

    def __init__(self, input: ProductSpace, output: ProductSpace, choi=None, kraus=None, name: str = ""):
        if choi is None and kraus is None:
            raise ValueError("a channel needs a Choi matrix or Kraus operators")
        overlap = set(input.labels) & set(output.labels)
        if overlap:
            raise ValueError(f"labels {sorted(overlap)} appear on both sides of channel {name!r}")
        self.input = input
        self.output = output
        self.name = name
        if choi is not None:
            choi = check_operator(choi, ProductSpace(input.factors + output.factors), "Choi matrix")
            choi.setflags(write=False)
            self.__dict__["choi"] = choi
        if kraus is not None:
            ops = np.asarray([np.asarray(k, dtype=complex) for k in kraus]).reshape(-1, output.dim, input.dim)
            if not np.all(np.isfinite(ops)):
                raise ValueError("Kraus operators contain non-finite entries")
            ops.setflags(write=False)
            self.__dict__["kraus_ops"] = ops

    @classmethod
    def from_choi(cls, input, output, choi, name=""):
        return cls(input, output, choi=choi, name=name)

    @classmethod
    def from_kraus(cls, input, output, ops, name=""):
        return cls(input, output, kraus=ops, name=name)

    def __repr__(self):
        return (f"QuantumChannel({self.name!r}, {list(zip(self.input.labels, self.input.dims))} -> "
                f"{list(zip(self.output.labels, self.output.dims))})")

    @property
    def d_in(self) -> int:
        return self.input.dim

    @property
    def d_out(self) -> int:
        return self.output.dim

    @property
    def has_choi(self) -> bool:
        return "choi" in self.__dict__

    @property
    def has_kraus(self) -> bool:
        return "kraus_ops" in self.__dict__

    @cached_property
    def choi(self) -> np.ndarray:
        ops = self.kraus_ops
        # |K>> = sum_i |i> (x) K|i>, i.e. v[i, o] = K[o, i]
        v = np.transpose(ops, (0, 2, 1)).reshape(len(ops), -1)
        j = v.T @ v.conj()
        j.setflags(write=False)
        return j

    @cached_property
    def kraus_ops(self) -> np.ndarray:
        j = self.choi
        w, u = np.linalg.eigh((j + dagger(j)) / 2)
        scale = max(1.0, float(np.abs(w).max(initial=0.0)))
        keep = w > 1e-13 * scale
        if np.any(w < -1e-8 * scale):
            raise ValueError(f"channel {self.name!r} is not completely positive; no Kraus form")
        vecs = u[:, keep] * np.sqrt(w[keep])
        ops = np.transpose(vecs.T.reshape(-1, self.d_in, self.d_out), (0, 2, 1))
        if len(ops) == 0:
            ops = np.zeros((1, self.d_out, self.d_in), dtype=complex)
        ops = np.ascontiguousarray(ops)
        ops.setflags(write=False)
        return ops

    @property
    def kraus(self) -> list[np.ndarray]:
        return list(self.kraus_ops)

    def choi_tensor(self) -> np.ndarray:
        dims = self.input.dims + self.output.dims
        return self.choi.reshape(dims + dims)

    def is_cp(self, tol: float = DEFAULT_TOL) -> bool:
        if self.has_kraus:
            return True
        return is_psd(self.choi, tol)

    @cached_property
    def tp_deficit(self) -> float:
        """Frobenius distance between sum_k K^dag K and the identity."""
        if self.has_kraus:
            ops = self.kraus_ops
            s = np.einsum("kai,kaj->ij", ops.conj(), ops, optimize=True)
        else:
            space = ProductSpace(self.input.factors + self.output.factors)
            s = partial_trace(self.choi, space, self.input.labels)
        return float(np.linalg.norm(s - np.eye(self.d_in)))

    def is_tp(self, tol: float = DEFAULT_TOL) -> bool:
        return self.tp_deficit <= tol

    def renamed(self, name: str) -> "QuantumChannel":
        return self.relabel({}, name=name)

    def relabel(self, mapping: dict[str, str], name: str | None = None) -> "QuantumChannel":
        """Same map with some factor labels renamed."""
        inp = self.input.relabel(mapping)
        out = self.output.relabel(mapping)
        nm = self.name if name is None else name
        ch = QuantumChannel.__new__(QuantumChannel)
        ch.input, ch.output, ch.name = inp, out, nm
        if self.has_choi:
            ch.__dict__["choi"] = self.choi
        if self.has_kraus:
            ch.__dict__["kraus_ops"] = self.kraus_ops
        return ch

    def reorder(self, input_order: Sequence[str] | None = None,
                output_order: Sequence[str] | None = None) -> "QuantumChannel":
        """Same map with the factors of either side permuted."""
        input_order = list(input_order or self.input.labels)
        output_order = list(output_order or self.output.labels)
        inp = self.input.select(input_order)
        out = self.output.select(output_order)
        ops = self.kraus_ops if (self.has_kraus or not self.has_choi) else None
        if ops is not None and not self.has_choi:
            new = [permute_vector(permute_vector(k, self.output, output_order).T, self.input, input_order).T
                   for k in ops]
            return QuantumChannel(inp, out, kraus=new, name=self.name)
        space = ProductSpace(self.input.factors + self.output.factors)
        j = permute_operator(self.choi, space, input_order + output_order)
        return QuantumChannel(inp, out, choi=j, name=self.name)

    def matrix_form(self) -> np.ndarray:
        """Superoperator S with vec(Phi(rho)) = S vec(rho) (row-major vec)."""
        ops = self.kraus_ops
        return sum(np.kron(k, k.conj()) for k in ops)


def to_local_choi(ch: QuantumChannel) -> np.ndarray:
    """Choi matrix in the local-operation convention (the transpose of the plain one)."""
    return ch.choi.T.copy()


def from_local_choi(input: ProductSpace, output: ProductSpace, m, name: str = "") -> QuantumChannel:
    return QuantumChannel.from_choi(input, output, np.asarray(m).T, name=name)


def _space(spec) -> ProductSpace:
    if isinstance(spec, ProductSpace):
        return spec
    if isinstance(spec, Factor):
        return ProductSpace((spec,))
    if isinstance(spec, tuple) and len(spec) == 2 and isinstance(spec[0], str):
        return ProductSpace.of(spec)
    return ProductSpace.of(*spec)


def identity(input, output, name: str = "id") -> QuantumChannel:
    inp, out = _space(input), _space(output)
    if inp.dim != out.dim:
        raise DimensionMismatch("identity channel needs equal dimensions")
    return QuantumChannel.from_kraus(inp, out, [np.eye(inp.dim)], name=name)


def unitary_channel(u, input, output, name: str = "U") -> QuantumChannel:
    inp, out = _space(input), _space(output)
    u = np.asarray(u, dtype=complex)
    if u.shape != (out.dim, inp.dim):
        raise DimensionMismatch(f"operator shape {u.shape} does not match {(out.dim, inp.dim)}")
    return QuantumChannel.from_kraus(inp, out, [u], name=name)


def replacement(state, input, output, name: str = "replace") -> QuantumChannel:
    """Discard the input and prepare ``state``."""
    inp, out = _space(input), _space(output)
    state = check_operator(state, out, "prepared state")
    w, u = np.linalg.eigh(state)
    ops = []
    for lam, vec in zip(w, u.T):
        if lam > 1e-14:
            for i in range(inp.dim):
                e = np.zeros(inp.dim)
                e[i] = 1
                ops.append(np.sqrt(lam) * np.outer(vec, e))
    return QuantumChannel.from_kraus(inp, out, ops, name=name)


def state_preparation(state, output, name: str = "prep") -> QuantumChannel:
    return replacement(state, ProductSpace(), output, name=name)


def trace_channel(input, name: str = "tr") -> QuantumChannel:
    inp = _space(input)
    return QuantumChannel.from_kraus(inp, ProductSpace(), [np.eye(inp.dim)[i:i + 1] for i in range(inp.dim)],
                                     name=name)


def classical_function(f, input, output, name: str = "f") -> QuantumChannel:
    """Deterministic classical channel |x> -> |f(x)> (dephasing on the input).

    ``f`` maps a tuple of input basis indices to a tuple of output indices.
    """
    inp, out = _space(input), _space(output)
    ops = []
    for x in product(*[range(d) for d in inp.dims]):
        y = tuple(f(x))
        if len(y) != len(out):
            raise DimensionMismatch(f"f{x} = {y} does not match output factors {out.labels}")
        k = np.zeros((out.dim, inp.dim), dtype=complex)
        k[np.ravel_multi_index(y, out.dims) if out.dims else 0,
          np.ravel_multi_index(x, inp.dims) if inp.dims else 0] = 1
        ops.append(k)
    return QuantumChannel.from_kraus(inp, out, ops, name=name)


def apply(ch: QuantumChannel, state, check: bool = True, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Phi(state) for an operator on ``ch.input``."""
    rho = check_operator(state, ch.input, "state")
    if check:
        if abs(np.trace(rho) - 1) > tol:
            raise ValueError("state does not have unit trace")
        if not is_psd(rho, tol):
            raise ValueError("state is not positive semidefinite")
    if ch.has_kraus or not ch.has_choi:
        ops = ch.kraus_ops
        k, a, i = ops.shape
        left = (ops @ rho).transpose(1, 0, 2).reshape(a, k * i)
        return left @ ops.transpose(1, 0, 2).reshape(a, k * i).conj().T
    j = ch.choi.reshape(ch.d_in, ch.d_out, ch.d_in, ch.d_out)
    return np.einsum("ij,iajb->ab", rho, j)


def apply_pure(ch: QuantumChannel, psi) -> np.ndarray:
    """Phi(|psi><psi|) without forming the input density matrix."""
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if ch.has_kraus or not ch.has_choi:
        v = ch.kraus_ops @ psi
        return v.T @ v.conj()
    return apply(ch, np.outer(psi, psi.conj()), check=False)


# -- composition -----------------------------------------------------------

def _check_wiring(channels: Sequence[QuantumChannel], wires):
    out_owner, in_owner = {}, {}
    for n, ch in enumerate(channels):
        for f in ch.output:
            if f.label in out_owner:
                raise WiringError(f"output label {f.label!r} used by two channels")
            out_owner[f.label] = (n, f)
        for f in ch.input:
            if f.label in in_owner:
                raise WiringError(f"input label {f.label!r} used by two channels")
            in_owner[f.label] = (n, f)
    seen_o, seen_i = set(), set()
    for o, i in wires:
        if o not in out_owner:
            raise WiringError(f"wire source {o!r} is not an output")
        if i not in in_owner:
            raise WiringError(f"wire target {i!r} is not an input")
        if o in seen_o or i in seen_i:
            raise WiringError(f"wire ({o!r}, {i!r}) reuses a connected label")
        seen_o.add(o)
        seen_i.add(i)
        if out_owner[o][1].dim != in_owner[i][1].dim:
            raise WiringError(f"wire ({o!r}, {i!r}) joins dimensions {out_owner[o][1].dim} and "
                              f"{in_owner[i][1].dim}")
    return out_owner, in_owner


def _free_spaces(channels, wires):
    wired_o = {o for o, _ in wires}
    wired_i = {i for _, i in wires}
    fin = tuple(f for ch in channels for f in ch.input if f.label not in wired_i)
    fout = tuple(f for ch in channels for f in ch.output if f.label not in wired_o)
    return ProductSpace(fin), ProductSpace(fout)


def _link_choi(channels, wires, name):
    """Loop formula on Choi tensors: wired input/output indices are identified."""
    counter = iter(range(10 ** 6))
    idx = {}
    for n, ch in enumerate(channels):
        for side, space in (("i", ch.input), ("o", ch.output)):
            for f in space:
                idx[(side, f.label)] = (next(counter), next(counter))
    for o, i in wires:
        idx[("i", i)] = idx[("o", o)]
    operands = []
    for ch in channels:
        labels = [("i", l) for l in ch.input.labels] + [("o", l) for l in ch.output.labels]
        rows = [idx[k][0] for k in labels]
        cols = [idx[k][1] for k in labels]
        operands += [ch.choi_tensor(), rows + cols]
    fin, fout = _free_spaces(channels, wires)
    keys = [("i", l) for l in fin.labels] + [("o", l) for l in fout.labels]
    out_idx = [idx[k][0] for k in keys] + [idx[k][1] for k in keys]
    used = sorted({x for k in idx.values() for x in k})
    remap = {x: n for n, x in enumerate(used)}
    if len(remap) > 52:
        raise WiringError("composition too large for a single contraction")
    ops = [o if n % 2 == 0 else [remap[x] for x in o] for n, o in enumerate(operands)]
    t = np.einsum(*ops, [remap[x] for x in out_idx], optimize="greedy")
    d = fin.dim * fout.dim
    return QuantumChannel(fin, fout, choi=t.reshape(d, d), name=name)


def reduce_kraus(ops: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Minimal equivalent Kraus set (same map) via a singular value decomposition."""
    ops = np.asarray(ops)
    n = ops.shape[0]
    if n <= 1:
        return ops
    flat = ops.reshape(n, -1)
    if n > flat.shape[1]:
        # more operators than the Choi rank allows: diagonalise sum_k vec(K_k) vec(K_k)^dagger instead
        c = flat.T @ flat.conj()
        w, v = np.linalg.eigh(c)
        scale = max(1.0, float(w.max(initial=0.0)))
        keep = w > tol * scale
        new = (v[:, keep] * np.sqrt(w[keep])).T
        return new.reshape((-1,) + ops.shape[1:])
    gram = flat.conj() @ flat.T
    w, u = np.linalg.eigh(gram)
    scale = max(1.0, float(w.max(initial=0.0)))
    keep = w > tol * scale
    # rows of flat^T u / sqrt(w) are orthonormal; new ops = sqrt(w) * those rows
    new = (u[:, keep].T @ flat)
    return new.reshape((-1,) + ops.shape[1:])


def _link_kraus(channels, wires, name):
    """Loop formula on Kraus operators: L = sum_k <k|_D K |k>_B for every wire."""
    counter = iter(range(10 ** 6))
    idx = {}
    for ch in channels:
        for f in ch.output:
            idx[("o", f.label)] = next(counter)
        for f in ch.input:
            idx[("i", f.label)] = next(counter)
    for o, i in wires:
        idx[("i", i)] = idx[("o", o)]
    batch = [next(counter) for _ in channels]
    operands = []
    for b, ch in zip(batch, channels):
        t = ch.kraus_ops.reshape((-1,) + ch.output.dims + ch.input.dims)
        sub = [b] + [idx[("o", l)] for l in ch.output.labels] + [idx[("i", l)] for l in ch.input.labels]
        operands += [t, sub]
    fin, fout = _free_spaces(channels, wires)
    out_idx = batch + [idx[("o", l)] for l in fout.labels] + [idx[("i", l)] for l in fin.labels]
    used = sorted(set(idx.values()) | set(batch))
    remap = {x: n for n, x in enumerate(used)}
    if len(remap) > 52:
        raise WiringError("composition too large for a single contraction")
    ops = [o if n % 2 == 0 else [remap[x] for x in o] for n, o in enumerate(operands)]
    t = np.einsum(*ops, [remap[x] for x in out_idx], optimize="greedy")
    t = t.reshape(-1, fout.dim, fin.dim)
    if t.shape[0] > 1:
        t = reduce_kraus(t)
    return QuantumChannel(fin, fout, kraus=t, name=name)


def _choi_size(ch):
    return ch.d_in * ch.d_out


def link(channels: Sequence[QuantumChannel], wires: Iterable[tuple[str, str]] = (), name: str = "",
         method: str = "auto") -> QuantumChannel:
    """Parallel composition of ``channels`` followed by a loop for every wire.

    ``wires`` are ``(output_label, input_label)`` pairs; a wire may connect two
    different channels in either direction or feed a channel back into itself.
    ``method`` picks the Choi route, the Kraus route or lets the sizes decide.
    """
    channels = list(channels)
    wires = [tuple(w) for w in wires]
    if not channels:
        raise WiringError("nothing to compose")
    _check_wiring(channels, wires)
    if method == "auto":
        big = any(_choi_size(c) > CHOI_LIMIT for c in channels)
        kraus_only = any(c.has_kraus and not c.has_choi for c in channels)
        method = "kraus" if (big or kraus_only) else "choi"
    if method == "choi":
        if len(channels) <= 2:
            return _link_choi(channels, wires, name)
        return _fold(channels, wires, name, _link_choi)
    if method == "kraus":
        if len(channels) <= 2:
            return _link_kraus(channels, wires, name)
        return _fold(channels, wires, name, _link_kraus)
    raise ValueError(f"unknown composition method {method!r}")


def _fold(channels, wires, name, step):
    """Contract channels one at a time, applying every wire as soon as both ends are present."""
    acc = channels[0]
    pending = list(wires)
    for ch in channels[1:]:
        present_o = set(acc.output.labels) | set(ch.output.labels)
        present_i = set(acc.input.labels) | set(ch.input.labels)
        now = [w for w in pending if w[0] in present_o and w[1] in present_i]
        pending = [w for w in pending if w not in now]
        acc = step([acc, ch], now, name)
    if pending:
        acc = step([acc], pending, name)
    return acc


def parallel(a: QuantumChannel, b: QuantumChannel, name: str = "") -> QuantumChannel:
    return link([a, b], [], name=name or f"{a.name}(x){b.name}")


def loop(ch: QuantumChannel, out_label: str, in_label: str, name: str = "", method: str = "auto") -> QuantumChannel:
    """Feed output ``out_label`` back into input ``in_label``."""
    if out_label not in ch.output:
        raise WiringError(f"{out_label!r} is not an output of {ch.name!r}")
    if in_label not in ch.input:
        raise WiringError(f"{in_label!r} is not an input of {ch.name!r}")
    return link([ch], [(out_label, in_label)], name=name or ch.name, method=method)


def sequential(first: QuantumChannel, second: QuantumChannel, wires=None, name: str = "",
               method: str = "auto") -> QuantumChannel:
    """``second`` after ``first``; wires default to matching output/input order."""
    if wires is None:
        if first.output.dims != second.input.dims:
            raise WiringError("default wiring needs matching output and input dimensions")
        wires = list(zip(first.output.labels, second.input.labels))
    for o, i in wires:
        if o not in first.output or i not in second.input:
            raise WiringError(f"wire ({o!r}, {i!r}) must run from the first channel into the second")
    return link([first, second], wires, name=name or f"{second.name}o{first.name}", method=method)


# -- vacuum extension ------------------------------------------------------

def vacuum_extend(ch: QuantumChannel, labels: Iterable[str] | None = None, name: str | None = None) -> QuantumChannel:
    """Add the vacuum level (index 0) to the chosen factors (default: all).

    On inputs whose extended factors all carry a message the map acts as
    ``ch`` with indices shifted by one.  An all-vacuum input, and any input with
    only some extended factors vacant, produces vacuum on every extended output
    and |0> on the other outputs, with the non-extended inputs discarded.
    A single-Kraus map without non-extended factors stays coherent across the
    two sectors; other maps are extended block-diagonally.
    """
    labels = set(ch.input.labels + ch.output.labels) if labels is None else set(labels)
    for l in labels:
        if l not in ch.input and l not in ch.output:
            raise KeyError(f"no factor {l!r} in channel {ch.name!r}")
    ext_in = [f.label in labels for f in ch.input]
    ext_out = [f.label in labels for f in ch.output]
    new_in = ProductSpace(tuple(Factor(f.label, f.dim + 1, True) if e else f for f, e in zip(ch.input, ext_in)))
    new_out = ProductSpace(tuple(Factor(f.label, f.dim + 1, True) if e else f for f, e in zip(ch.output, ext_out)))

    def emb(space_old, space_new, ext):
        # isometry from the old space into the message sector of the new one
        m = np.ones((1, 1))
        for f, e in zip(space_old, ext):
            piece = np.eye(f.dim + 1, f.dim, k=-1) if e else np.eye(f.dim)
            m = np.kron(m, piece)
        return m

    e_in = emb(ch.input, new_in, ext_in)
    e_out = emb(ch.output, new_out, ext_out)
    message_ops = [e_out @ k @ e_in.T for k in ch.kraus_ops]

    vac_out = np.zeros(new_out.dim)
    vac_out[0] = 1.0  # all factors at index 0: vacuum on extended ones, |0> elsewhere
    all_vacuum, partial_ops = None, []
    for idx in product(*[range(f.dim) for f in new_in]):
        ext_vals = [v for v, e in zip(idx, ext_in) if e]
        if not ext_vals or all(v > 0 for v in ext_vals):
            continue
        col = np.zeros(new_in.dim)
        col[np.ravel_multi_index(idx, new_in.dims)] = 1.0
        if all(v == 0 for v in idx):
            all_vacuum = np.outer(vac_out, col)
        else:
            partial_ops.append(np.outer(vac_out, col))
    coherent = (len(message_ops) == 1 and all(ext_in) and all(ext_out) and all_vacuum is not None
                and np.allclose(ch.kraus_ops[0].conj().T @ ch.kraus_ops[0], np.eye(ch.d_in)))
    if coherent:
        ops = [message_ops[0] + all_vacuum] + partial_ops
    else:
        ops = message_ops + ([all_vacuum] if all_vacuum is not None else []) + partial_ops
    if not any(ext_in) and not any(ext_out):
        ops = list(ch.kraus_ops)
    return QuantumChannel.from_kraus(new_in, new_out, ops, name=ch.name if name is None else name)


def restrict_to_message(ch: QuantumChannel, labels: Iterable[str] | None = None) -> QuantumChannel:
    """Inverse of :func:`vacuum_extend` on the message sector (drops index 0 of vacuum factors)."""
    labels = {f.label for f in ch.input.factors + ch.output.factors if f.vacuum} if labels is None else set(labels)

    def proj(space):
        m = np.ones((1, 1))
        for f in space:
            m = np.kron(m, np.eye(f.dim, f.dim - 1, k=-1) if f.label in labels else np.eye(f.dim))
        return m, ProductSpace(tuple(Factor(f.label, f.dim - 1) if f.label in labels else f for f in space))

    p_in, s_in = proj(ch.input)
    p_out, s_out = proj(ch.output)
    ops = [p_out.T @ k @ p_in for k in ch.kraus_ops]
    return QuantumChannel.from_kraus(s_in, s_out, ops, name=ch.name)


# -- fine-graining of maps ---------------------------------------------------

@dataclass(frozen=True)
class SystemSplit:
    """How one coarse system is realised by fine systems.

    ``subspaces[v]`` is an isometry whose columns span the subspace of the
    joint fine space (factors ``fine_labels`` in that order) that encodes
    coarse basis value ``v``.
    """

    fine_labels: tuple[str, ...]
    subspaces: tuple[np.ndarray, ...]

    def decoder(self) -> np.ndarray:
        return np.hstack(self.subspaces)


def basis_split(fine_labels: Sequence[str], fine_dims: Sequence[int], assignment) -> SystemSplit:
    """Split from a classical assignment ``v -> list of fine basis index tuples``."""
    d = prod(fine_dims)
    subs = []
    for v in range(len(assignment)):
        cols = []
        for idx in assignment[v]:
            c = np.zeros(d, dtype=complex)
            c[np.ravel_multi_index(tuple(idx), tuple(fine_dims))] = 1
            cols.append(c)
        subs.append(np.array(cols).T.reshape(d, len(cols)))
    return SystemSplit(tuple(fine_labels), tuple(subs))


def identity_split(label: str, dim: int) -> SystemSplit:
    return basis_split([label], [dim], [[(v,)] for v in range(dim)])


def _validate_split(coarse_label, coarse_dim, split: SystemSplit, fine_space: ProductSpace, tol):
    if len(split.subspaces) != coarse_dim:
        raise ValueError(f"system {coarse_label!r}: {len(split.subspaces)} subspaces for dimension {coarse_dim}")
    d = fine_space.select(split.fine_labels).dim
    for v, s in enumerate(split.subspaces):
        if s.ndim != 2 or s.shape[0] != d or s.shape[1] < 1:
            raise ValueError(f"system {coarse_label!r}: subspace {v} has shape {s.shape}, expected ({d}, k>=1)")
    dec = split.decoder()
    if np.linalg.norm(dec.conj().T @ dec - np.eye(dec.shape[1])) > tol:
        raise ValueError(f"system {coarse_label!r}: subspaces are not orthonormal and mutually orthogonal")


def is_fine_graining_of(fine: QuantumChannel, coarse: QuantumChannel, sys_map: dict[str, SystemSplit],
                        tol: float = 1e-8, seed: int = 0, n_random: int = 2) -> bool:
    """Check that ``fine`` realises ``coarse`` block-wise on the encoded subspaces.

    For every coarse input basis state v and sampled fine states psi in the
    matching subspace, the fine output must be sum_uu' p_uu' |phi_u><phi_u'|
    with p the coarse output and phi_u unit vectors in the output subspaces.
    The phases of phi_u are fixed along a spanning forest of the nonzero p_uu'.
    """
    for space, fine_space in ((coarse.input, fine.input), (coarse.output, fine.output)):
        labels = []
        for f in space:
            if f.label not in sys_map:
                raise ValueError(f"no fine-graining given for system {f.label!r}")
            labels += list(sys_map[f.label].fine_labels)
        if sorted(labels) != sorted(fine_space.labels):
            raise ValueError(f"fine systems {sorted(labels)} do not match fine channel factors "
                             f"{sorted(fine_space.labels)}")
        for f in space:
            _validate_split(f.label, f.dim, sys_map[f.label], fine_space, tol)

    rng = rng_from(seed)
    in_group = [l for f in coarse.input for l in sys_map[f.label].fine_labels]
    out_group = [l for f in coarse.output for l in sys_map[f.label].fine_labels]
    decoders = [sys_map[f.label].decoder() for f in coarse.output]
    dec = np.ones((1, 1))
    for dj in decoders:
        dec = np.kron(dec, dj)

    # flat index lists of every coarse output basis tuple inside the decoded space
    sizes = [[s.shape[1] for s in sys_map[f.label].subspaces] for f in coarse.output]
    offsets = [np.concatenate([[0], np.cumsum(sz)[:-1]]) for sz in sizes]
    totals = [sum(sz) for sz in sizes]
    block_idx = []
    for u in product(*[range(f.dim) for f in coarse.output]):
        ranges = [np.arange(offsets[j][uj], offsets[j][uj] + sizes[j][uj]) for j, uj in enumerate(u)]
        flat = np.zeros(1, dtype=int)
        for j, r in enumerate(ranges):
            flat = (flat[:, None] * totals[j] + r[None, :]).reshape(-1)
        block_idx.append(flat)

    for v in product(*[range(f.dim) for f in coarse.input]):
        e = np.zeros(coarse.d_in)
        e[np.ravel_multi_index(v, coarse.input.dims) if coarse.input.dims else 0] = 1
        p = apply(coarse, np.outer(e, e), check=False)
        subs = [sys_map[f.label].subspaces[vi] for f, vi in zip(coarse.input, v)]
        samples = []
        if prod(s.shape[1] for s in subs) <= 16:
            for cols in product(*[range(s.shape[1]) for s in subs]):
                samples.append([s[:, c] for s, c in zip(subs, cols)])
        else:
            samples.append([s[:, 0] for s in subs])
        for _ in range(n_random):
            samples.append([s @ random_vector(s.shape[1], rng) for s in subs])
        for parts in samples:
            psi = np.ones(1, dtype=complex)
            for x in parts:
                psi = np.kron(psi, x)
            psi = permute_vector(psi, fine.input.select(in_group), fine.input.labels)
            rho = apply_pure(fine, psi)
            rho = permute_operator(rho, fine.output, out_group)
            red = dec.conj().T @ rho @ dec
            if np.linalg.norm(rho - dec @ red @ dec.conj().T) > tol:
                return False
            if not _blocks_match(red, p, block_idx, tol):
                return False
    return True


def _blocks_match(red, p, block_idx, tol) -> bool:
    n = len(block_idx)
    vecs = [None] * n
    for u in range(n):
        b = red[np.ix_(block_idx[u], block_idx[u])]
        puu = p[u, u].real
        if puu <= tol:
            if np.linalg.norm(b) > tol:
                return False
            continue
        w, x = np.linalg.eigh(b)
        vec = x[:, -1]
        if np.linalg.norm(b - puu * np.outer(vec, vec.conj())) > tol:
            return False
        vecs[u] = vec
    live = [u for u in range(n) if vecs[u] is not None]
    # fix relative phases along a spanning forest of the nonzero coherences
    phase = {}
    for root in live:
        if root in phase:
            continue
        phase[root] = 1.0
        stack = [root]
        while stack:
            u = stack.pop()
            for w in live:
                if w in phase or abs(p[u, w]) <= tol:
                    continue
                g = vecs[u].conj() @ red[np.ix_(block_idx[u], block_idx[w])] @ vecs[w]
                # g = p_uw * conj(phase_u) * phase_w  ->  phase_w
                phase[w] = g / p[u, w] * phase[u]
                if abs(abs(phase[w]) - 1) > 1e-6:
                    return False
                phase[w] /= abs(phase[w])
                stack.append(w)
    for u in range(n):
        for w in range(n):
            b = red[np.ix_(block_idx[u], block_idx[w])]
            if vecs[u] is None or vecs[w] is None:
                if np.linalg.norm(b) > tol:
                    return False
                continue
            expect = p[u, w] * np.conj(phase[u]) * phase[w] * np.outer(vecs[u], vecs[w].conj())
            if np.linalg.norm(b - expect) > tol:
                return False
    return True
