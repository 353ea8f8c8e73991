"""The quantum switch: process vector, supermap action, cyclic signalling and a Minkowski implementation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .channels import QuantumChannel, apply, identity, link, unitary_channel, vacuum_extend
from .process import (ExtendedLocalMap, Party, ProcessMatrix, extended_from_instruments, map_to_process,
                      partial_compose)
from .signalling import SignallingStructure, signals
from .spacetime import (ElementalImplementation, Spacetime, as_region, boosted_chart, elemental_label, maximal_fine_grain, pairwise_correspondence, time_localised)
from .tensor import DEFAULT_TOL, Factor, ProductSpace, partial_trace

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
}

PARTIES = (Party("C", 1, 4), Party("A", 2, 2), Party("B", 2, 2), Party("D", 4, 1))


@dataclass(frozen=True)
class SwitchScenario:
    alpha: complex
    beta: complex
    psi: np.ndarray
    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex).reshape(-1)
        if psi.shape != (2,):
            raise ValueError("target state must be a qubit vector")
        if abs(np.linalg.norm(psi) - 1) > 1e-9:
            raise ValueError("target state is not normalised")
        if abs(abs(self.alpha) ** 2 + abs(self.beta) ** 2 - 1) > 1e-9:
            raise ValueError("control amplitudes are not normalised")
        for n in ("U", "V"):
            u = np.asarray(getattr(self, n), dtype=complex)
            if u.shape != (2, 2) or not np.allclose(u.conj().T @ u, np.eye(2), atol=1e-9):
                raise ValueError(f"{n} is not a 2x2 unitary")
            object.__setattr__(self, n, u)
        object.__setattr__(self, "psi", psi)

    @classmethod
    def normalised(cls, alpha, beta, psi, U, V) -> "SwitchScenario":
        n = np.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
        psi = np.asarray(psi, dtype=complex)
        return cls(alpha / n, beta / n, psi / np.linalg.norm(psi), U, V)

    @property
    def control(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)

    @property
    def initial(self) -> np.ndarray:
        """C's preparation, control (x) target."""
        return np.kron(self.control, self.psi)


def random_scenario(rng) -> SwitchScenario:
    from .sampling import random_unitary, random_vector
    c = random_vector(2, rng)
    return SwitchScenario(c[0], c[1], random_vector(2, rng), random_unitary(2, rng), random_unitary(2, rng))


def switch_supermap(s: SwitchScenario) -> np.ndarray:
    """alpha |0> (x) VU|psi> + beta |1> (x) UV|psi>."""
    return (s.alpha * np.kron([1, 0], s.V @ s.U @ s.psi) + s.beta * np.kron([0, 1], s.U @ s.V @ s.psi))


def _routing_kraus() -> np.ndarray:
    """Isometry C_O (x) A_O (x) B_O -> A_I (x) B_I (x) D_I of the switch, D_I = control (x) target."""
    k = np.zeros((2, 2, 2, 2, 2, 2, 2, 2), dtype=complex)  # (a_i, b_i, d_c, d_t) x (c, t, a_o, b_o)
    for t in range(2):
        for a in range(2):
            for b in range(2):
                k[t, a, 0, b, 0, t, a, b] = 1  # A first: target -> A, A -> B, B -> D
                k[b, t, 1, a, 1, t, a, b] = 1  # B first: target -> B, B -> A, A -> D
    return k.reshape(16, 16)


def wqs_map(dephased: bool = False) -> QuantumChannel:
    """The switch process map {C_O, A_O, B_O} -> {A_I, B_I, D_I}.

    With ``dephased`` the control is measured first, which gives the
    four-party classical switch.
    """
    inp = ProductSpace.of(("C_O", 4), ("A_O", 2), ("B_O", 2))
    out = ProductSpace.of(("A_I", 2), ("B_I", 2), ("D_I", 4))
    k = _routing_kraus()
    if not dephased:
        return QuantumChannel.from_kraus(inp, out, [k], name="W_QS")
    ops = []
    for c in range(2):
        p = np.zeros((2, 2))
        p[c, c] = 1
        ops.append(k @ np.kron(np.kron(p, np.eye(2)), np.eye(4)))
    return QuantumChannel.from_kraus(inp, out, ops, name="W_CS4")


def build_wqs() -> ProcessMatrix:
    """Pure four-party switch process; trace 16."""
    return map_to_process(wqs_map(), PARTIES, name="W_QS", dense=False)


def build_classical_switch4() -> ProcessMatrix:
    return map_to_process(wqs_map(dephased=True), PARTIES, name="W_CS4", dense=False)


# -- local maps -------------------------------------------------------------------------

def preparation_map(state: np.ndarray, party: Party = PARTIES[0]) -> ExtendedLocalMap:
    v = np.asarray(state, dtype=complex).reshape(-1, 1)
    return extended_from_instruments(party, [[[v]]], name="prepare")


def unitary_map(u: np.ndarray, party: Party) -> ExtendedLocalMap:
    return extended_from_instruments(party, [[[np.asarray(u, dtype=complex)]]], name="unitary")


def control_measurement(party: Party = PARTIES[3], basis: str = "pm") -> ExtendedLocalMap:
    """Measure the control of D_I = control (x) target; outcome 0 is + (or 0), 1 is - (or 1)."""
    if basis == "pm":
        vecs = [np.array([1, 1]) / np.sqrt(2), np.array([1, -1]) / np.sqrt(2)]
    else:
        vecs = [np.array([1, 0]), np.array([0, 1])]
    inst = []
    for v in vecs:
        inst.append([np.kron(v.conj(), np.eye(2)[t])[None, :].astype(complex) for t in range(2)])
    return extended_from_instruments(party, [inst], name=f"measure-{basis}")


def switch_maps(s: SwitchScenario, basis: str = "pm") -> dict:
    return {"C": preparation_map(s.initial), "A": unitary_map(s.U, PARTIES[1]),
            "B": unitary_map(s.V, PARTIES[2]), "D": control_measurement(basis=basis)}


def wqs_output_state(s: SwitchScenario, pm: ProcessMatrix | None = None) -> np.ndarray:
    """Contract the process vector with C's preparation and the unitaries; returns the vector at D_I."""
    pm = pm or build_wqs()
    w = pm.factors[:, 0].reshape(1, 4, 2, 2, 2, 2, 4, 1)  # C_I C_O A_I A_O B_I B_O D_I D_O
    # each party closes its (input, output) pair with U[out, in]
    return np.einsum("zcaibjdw,c,ia,jb->d", w, s.initial, s.U, s.V)


def born_minus_probability(s: SwitchScenario) -> float:
    """P(-) for D measuring the control in the +/- basis, via the trace formula."""
    from .process import born_probabilities
    pm = build_wqs()
    br = born_probabilities(pm, switch_maps(s))
    return float(br.trace[0, 0, 0, 1, 0, 0, 0, 0])


# -- cyclic signalling -------------------------------------------------------------------

@dataclass
class CyclicSignalling:
    a_to_b: bool
    b_to_a: bool
    degenerate: bool


def qs_cyclic_signalling(s: SwitchScenario, tol: float = DEFAULT_TOL) -> CyclicSignalling:
    """Signalling A_O -> B_I and B_O -> A_I in the switch with C and D plugged in."""
    pm = build_wqs()
    c_prep = QuantumChannel.from_kraus(ProductSpace.of(("C_I", 1)), ProductSpace.of(("C_O", 4)),
                                       [s.initial.reshape(4, 1)], name="C")
    d_trash = QuantumChannel.from_kraus(ProductSpace.of(("D_I", 4)), ProductSpace.of(("D_O", 1)),
                                        [np.eye(4)[k][None, :] for k in range(4)], name="D")
    ch = partial_compose(pm, {"C": c_prep, "D": d_trash})
    ab = signals(ch, ["A_O"], ["B_I"], tol)
    ba = signals(ch, ["B_O"], ["A_I"], tol)
    return CyclicSignalling(ab, ba, bool(abs(s.alpha) < tol or abs(s.beta) < tol))


# -- Minkowski implementation ---------------------------------------------------------------

SWITCH_POINTS = {
    "P_C": (-10.0, 4.0), "P_D": (20.0, 5.0),
    "Q_I1": (0.0, 0.0), "Q_O1": (0.5, 0.0), "Q_I2": (4.0, 10.0), "Q_O2": (4.5, 10.0),
    "P_I2": (1.0, 0.0), "P_O2": (2.0, 0.0), "P_I1": (1.0, 9.0), "P_O1": (2.0, 9.0),
}

QS_EMBEDDING = {
    "C_O": ("P_C",), "A_I": ("P_I1", "P_I2"), "A_O": ("P_O1", "P_O2"),
    "B_I": ("Q_I1", "Q_I2"), "B_O": ("Q_O1", "Q_O2"), "D_I": ("P_D",),
}

BOB_VELOCITY = 0.4


def switch_spacetime(points: Mapping | None = None) -> Spacetime:
    return Spacetime.minkowski(dict(points or SWITCH_POINTS))


def mutated_points() -> dict:
    """Bob's second pair moved onto Alice's time slices, so one chart localises everyone."""
    p = dict(SWITCH_POINTS)
    p["Q_I2"] = (0.0, 10.0)
    p["Q_O2"] = (0.5, 10.0)
    return p


def _vac_factor(label, d):
    return Factor(label, d + 1, True)


def _shift(d):
    """Embed a d-level message into the vacuum-extended space (index 0 is vacuum)."""
    m = np.zeros((d + 1, d))
    m[1:, :] = np.eye(d)
    return m


def qs_stage1() -> QuantumChannel:
    """C_O^{P_C} -> A_I^{P_I1} (x) B_I^{Q_I1} (x) M: the target goes to A or B by the control, M keeps it."""
    inp = ProductSpace((Factor(elemental_label("C_O", "P_C"), 4),))
    out = ProductSpace((_vac_factor(elemental_label("A_I", "P_I1"), 2), _vac_factor(elemental_label("B_I", "Q_I1"), 2),
                        Factor("M", 2)))
    k = np.zeros((3, 3, 2, 2, 2), dtype=complex)   # a, b, m ; c, t
    for t in range(2):
        k[t + 1, 0, 0, 0, t] = 1
        k[0, t + 1, 1, 1, t] = 1
    return QuantumChannel.from_kraus(inp, out, [k.reshape(18, 4)], name="QS1")


def qs_stage2() -> QuantumChannel:
    """Wires A_O^{P_O1} -> B_I^{Q_I2} and B_O^{Q_O1} -> A_I^{P_I2}."""
    a = identity(ProductSpace((_vac_factor(elemental_label("A_O", "P_O1"), 2),)),
                 ProductSpace((_vac_factor(elemental_label("B_I", "Q_I2"), 2),)))
    b = identity(ProductSpace((_vac_factor(elemental_label("B_O", "Q_O1"), 2),)),
                 ProductSpace((_vac_factor(elemental_label("A_I", "P_I2"), 2),)))
    return link([a, b], [], name="QS2", method="kraus")


def qs_stage3() -> QuantumChannel:
    """M (x) A_O^{P_O2} (x) B_O^{Q_O2} -> D_I^{P_D}: the memory picks which output reaches D."""
    inp = ProductSpace((Factor("M", 2), _vac_factor(elemental_label("A_O", "P_O2"), 2),
                        _vac_factor(elemental_label("B_O", "Q_O2"), 2)))
    out = ProductSpace((Factor(elemental_label("D_I", "P_D"), 4),))
    read = [_shift(2).T, np.outer([1, 0], [1, 0, 0])]   # message -> target, vacuum -> |0>
    ops = []
    for e in read:
        for r in range(3):
            k = np.zeros((2, 2, 2, 3, 3), dtype=complex)  # d_c, d_t ; m, a, b
            for m in range(2):
                if m == 0:   # A went first, B's second output reaches D
                    k[m, :, m, r, :] = e
                else:
                    k[m, :, m, :, r] = e
            ops.append(k.reshape(4, 18))
    return QuantumChannel.from_kraus(inp, out, ops, name="QS3")


def qs_elemental_channel(dephased: bool = False) -> QuantumChannel:
    """QS1, QS2 and QS3 joined along the memory wire."""
    s1 = qs_stage1()
    if dephased:
        ops = []
        for c in range(2):
            p = np.zeros((4, 4))
            p[2 * c:2 * c + 2, 2 * c:2 * c + 2] = np.eye(2)
            ops.append(s1.kraus_ops[0] @ p)
        s1 = QuantumChannel.from_kraus(s1.input, s1.output, ops, name="QS1-dephased")
    ch = link([s1, qs_stage2(), qs_stage3()], [("M", "M")], name="QS-elemental", method="kraus")
    ins = [elemental_label("C_O", "P_C"), elemental_label("A_O", "P_O1"), elemental_label("A_O", "P_O2"),
           elemental_label("B_O", "Q_O1"), elemental_label("B_O", "Q_O2")]
    outs = [elemental_label("A_I", "P_I1"), elemental_label("A_I", "P_I2"), elemental_label("B_I", "Q_I1"),
            elemental_label("B_I", "Q_I2"), elemental_label("D_I", "P_D")]
    return ch.reorder(ins, outs)


@dataclass
class MinkowskiProtocol:
    implementation: ElementalImplementation
    embedding: dict
    spacetime: Spacetime
    charts: tuple
    process: ProcessMatrix


def minkowski_protocol(points: Mapping | None = None, velocity: float = BOB_VELOCITY,
                       dephased: bool = False) -> MinkowskiProtocol:
    st = switch_spacetime(points)
    emb = {k: as_region(v, st) for k, v in QS_EMBEDDING.items()}
    coarse = wqs_map(dephased)
    impl = maximal_fine_grain(coarse, emb, qs_elemental_channel(dephased), st, check=False)
    alice = boosted_chart("Alice", st, 0.0)
    bob = boosted_chart("Bob", st, velocity)
    pm = build_classical_switch4() if dephased else build_wqs()
    return MinkowskiProtocol(impl, emb, st, (alice, bob), pm)


def fine_local_maps(s: SwitchScenario) -> dict:
    """Vacuum-extended U and V at every point of Alice and Bob, keyed by fine party name."""
    out = {}
    for party, u, pairs in (("A", s.U, (("P_I1", "P_O1"), ("P_I2", "P_O2"))),
                            ("B", s.V, (("Q_I1", "Q_O1"), ("Q_I2", "Q_O2")))):
        for pi, po in pairs:
            ch = unitary_channel(u, ProductSpace.of((elemental_label(f"{party}_I", pi), 2)),
                                 ProductSpace.of((elemental_label(f"{party}_O", po), 2)), name=f"{party}@{pi}")
            out[f"{party}@{pi}"] = vacuum_extend(ch)
    return out


def protocol_output_state(s: SwitchScenario, proto: MinkowskiProtocol | None = None) -> np.ndarray:
    """Density matrix at D_I^{P_D} after running the elemental protocol with U and V at every point."""
    proto = proto or minkowski_protocol()
    ch = proto.implementation.channel
    maps = fine_local_maps(s)
    composed = link([ch] + list(maps.values()),
                    [(m.input.labels[0], m.input.labels[0]) for m in maps.values()] +
                    [(m.output.labels[0], m.output.labels[0]) for m in maps.values()],
                    name="protocol", method="kraus")
    rho = np.outer(s.initial, s.initial.conj())
    return apply(composed, rho)


def stage_states(s: SwitchScenario) -> dict:
    """States of the elemental inputs of Alice and Bob at the two stages of the protocol."""
    maps = fine_local_maps(s)
    rho = np.outer(s.initial, s.initial.conj())
    s1 = qs_stage1()
    first = apply(s1, rho)
    a1, b1 = maps["A@P_I1"], maps["B@Q_I1"]
    net = link([s1, a1, b1, qs_stage2()],
               [(a1.input.labels[0], a1.input.labels[0]), (b1.input.labels[0], b1.input.labels[0]),
                (a1.output.labels[0], a1.output.labels[0]), (b1.output.labels[0], b1.output.labels[0])],
               method="kraus")
    second = apply(net, rho)
    return {"stage1": (first, s1.output), "stage2": (second, net.output)}


def single_use_counters(s: SwitchScenario) -> dict:
    """Expected number of non-vacuum arrivals at each party's elemental inputs."""
    st = stage_states(s)
    counts = {"A": 0.0, "B": 0.0}
    for rho, space in st.values():
        for f in space:
            if f.label.startswith(("A_I^", "B_I^")):
                r = partial_trace(rho, space, [f.label])
                counts[f.label[0]] += float(np.real(1 - r[0, 0]))
    return counts


def elemental_signalling(proto: MinkowskiProtocol, tol: float = DEFAULT_TOL) -> SignallingStructure:
    """Singleton signalling of the open elemental channel plus each fine party's input -> output."""
    ch = proto.implementation.channel
    edges = set()
    for a in ch.input.labels:
        for b in ch.output.labels:
            if signals(ch, [a], [b], tol):
                edges.add((frozenset([a]), frozenset([b])))
    for sys_in, sys_out in (("A_I", "A_O"), ("B_I", "B_O")):
        pairs = pairwise_correspondence(proto.embedding[sys_in], proto.embedding[sys_out], proto.spacetime)
        for p, q in pairs.items():
            edges.add((frozenset([elemental_label(sys_in, p)]), frozenset([elemental_label(sys_out, q)])))
    systems = tuple(ch.input.labels) + tuple(ch.output.labels)
    return SignallingStructure(systems, frozenset(edges))


SWITCH_ELEMENTAL_EDGES = frozenset({
    ("C_O^{P_C}", "A_I^{P_I1}"), ("C_O^{P_C}", "B_I^{Q_I1}"), ("C_O^{P_C}", "D_I^{P_D}"),
    ("A_O^{P_O1}", "B_I^{Q_I2}"), ("B_O^{Q_O1}", "A_I^{P_I2}"),
    ("A_O^{P_O2}", "D_I^{P_D}"), ("B_O^{Q_O2}", "D_I^{P_D}"),
    ("A_I^{P_I1}", "A_O^{P_O1}"), ("A_I^{P_I2}", "A_O^{P_O2}"),
    ("B_I^{Q_I1}", "B_O^{Q_O1}"), ("B_I^{Q_I2}", "B_O^{Q_O2}"),
})


def point_of_labels(proto: MinkowskiProtocol) -> dict:
    return dict(proto.implementation.point_of)


def time_localisation(proto: MinkowskiProtocol) -> dict:
    """chart -> which of the parties' in/out regions it time-localises."""
    out = {}
    for ch in proto.charts:
        out[ch.agent] = {k: time_localised(proto.embedding[k], ch) for k in ("A_I", "A_O", "B_I", "B_O")}
    return out


# -- friend -------------------------------------------------------------------------------

FRIEND_PARTIES = (Party("C", 1, 4), Party("A", 2, 4), Party("B", 2, 4), Party("D", 4, 1), Party("F", 4, 1))


def friend_map() -> QuantumChannel:
    """The switch map with Alice's and Bob's extra outputs sent straight to F."""
    core = wqs_map().relabel({"A_O": "A_O^T", "B_O": "B_O^T"})
    fa = identity(ProductSpace.of(("A_O^F", 2)), ProductSpace.of(("F_I^A", 2)))
    fb = identity(ProductSpace.of(("B_O^F", 2)), ProductSpace.of(("F_I^B", 2)))
    return link([core, fa, fb], [], name="W_QS_F", method="kraus")


def build_wqs_friend() -> ProcessMatrix:
    groups = {"A": (["A_I"], ["A_O^T", "A_O^F"]), "B": (["B_I"], ["B_O^T", "B_O^F"]),
              "C": ([], ["C_O"]), "D": (["D_I"], []), "F": (["F_I^A", "F_I^B"], [])}
    return map_to_process(friend_map(), FRIEND_PARTIES, groups, name="W_QS_F", dense=False)


FRIEND_POINTS = {
    "C": (-10.0, 5.0), "D": (40.0, 5.0), "F_A": (30.0, 5.0), "F_B": (20.0, 5.0),
    "AI1": (24.0, 0.0), "AI2": (24.0, 10.0), "AO1": (25.0, 0.0), "AO2": (25.0, 10.0),
    "BI1": (14.0, 0.0), "BI2": (14.0, 10.0), "BO1": (15.0, 0.0), "BO2": (15.0, 10.0),
}


def friend_embedding(constrained: bool = True):
    """(spacetime, embedding) for the friend process.

    Constrained: F receives Alice's photon at F_A and Bob's at F_B on the same
    worldline with t(F_A) > t(F_B); Alice's outputs lie on the past light cone
    of F_A and Bob's on that of F_B.  Unconstrained: the Minkowski switch
    embedding with F at a single far-future point.
    """
    if constrained:
        st = Spacetime.minkowski(FRIEND_POINTS)
        emb = {"C_O": {"C"}, "D_I": {"D"}, "F_I": {"F_A", "F_B"}, "A_I": {"AI1", "AI2"}, "A_O": {"AO1", "AO2"},
               "B_I": {"BI1", "BI2"}, "B_O": {"BO1", "BO2"}}
    else:
        pts = dict(SWITCH_POINTS)
        pts["P_F"] = (30.0, 5.0)
        st = Spacetime.minkowski(pts)
        emb = {k: set(v) for k, v in QS_EMBEDDING.items()}
        emb["F_I"] = {"P_F"}
    return st, {k: frozenset(v) for k, v in emb.items()}
