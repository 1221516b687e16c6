"""Distributed blind computation: collaborative encryption and gadgets.

Several clients jointly pad each qubit of a pattern. Every client contributes
a rotated |+_theta_j> state. The server entangles each contribution with the
owner's qubit through a CNOT and measures it, which leaves the owner's qubit
rotated by theta_owner + sum_j (-1)^t_j theta_j. Only the orchestrator learns
the resulting pad.

Also here are the two single-qubit gadgets used to turn a prepared |+_theta>
into either a dummy (Hadamard) or a trap/computation qubit (identity):

- `hi_gadget`: nine qubits on two lines. Only the first bottom angle depends
  on the choice, and that vertex has no X-dependency.
- `line_gadget`: five qubits on one line with choice-dependent angles on
  X-dependent vertices. It is kept as the counterexample.
"""

from __future__ import annotations

from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import angles as ang
from . import mbqc, qsim
from .ubqc import blind_delta, effective_outcomes, output_keys

Vertex = Hashable


# -- gadgets -----------------------------------------------------------------

HI_VERTICES = ["t1", "t2", "t3", "b1", "b2", "b3", "b4", "b5", "b6"]
HI_EDGES = [
    ("t1", "t2"), ("t2", "t3"),
    ("b1", "b2"), ("b2", "b3"), ("b3", "b4"), ("b4", "b5"), ("b5", "b6"),
    ("t1", "b4"), ("t2", "b6"),
]
HI_FLOW = {"t1": "t2", "t2": "t3", "b1": "b2", "b2": "b3", "b3": "b4", "b4": "b5", "b5": "b6"}
HI_ORDER = ["b1", "b2", "b3", "t1", "b4", "b5", "t2", "b6"]
HI_SHARED_ANGLES = {"b2": 0, "b3": 2, "b4": 2, "b5": 0, "t1": 0, "t2": 0}
HI_CHOICE_ANGLE = {True: 0, False: 6}


@dataclass
class Gadget:
    """A pattern mapping its top input to one output qubit.

    ``residual`` maps the logical outcomes of measured outputs to the Pauli
    (kx, kz) left on the kept output after flow corrections.
    """

    name: str
    apply_h: bool
    pattern: mbqc.Pattern
    top_input: Vertex
    aux_inputs: list[Vertex] = field(default_factory=list)
    residual_table: dict[tuple[int, ...], tuple[int, int]] = field(default_factory=dict)

    @property
    def output(self) -> Vertex:
        (o,) = self.pattern.kept_outputs
        return o

    @property
    def locations(self) -> list[Vertex]:
        """Qubits the clients prepare: every vertex except the kept output."""
        return [v for v in self.pattern.vertices if v != self.output]

    def residual(self, outcomes: Mapping[Vertex, int]) -> tuple[int, int]:
        key = tuple(outcomes[v] for v in sorted(self.pattern.output_angles, key=str))
        return self.residual_table.get(key, (0, 0))

    def next_to_last(self) -> Vertex:
        return self.pattern.measurement_order()[-2]


def hi_gadget(apply_h: bool) -> Gadget:
    """Nine-qubit H/I gadget (top line t1-t2-t3, bottom line b1..b6)."""
    angles = dict(HI_SHARED_ANGLES)
    angles["b1"] = HI_CHOICE_ANGLE[bool(apply_h)]
    p = mbqc.Pattern(
        HI_VERTICES, HI_EDGES, ["t1", "b1"], ["t3", "b6"], HI_FLOW, angles,
        output_angles={"b6": 0}, order=list(HI_ORDER),
    )
    table = {(0,): (1, 0), (1,): (0, 1)} if apply_h else {(0,): (0, 0), (1,): (0, 0)}
    return Gadget("hi", bool(apply_h), p, "t1", ["b1"], table)


def line_gadget(apply_h: bool) -> Gadget:
    """Five-qubit line with angles (0,0,0,0) for I and (0,pi/2,pi/2,pi/2) for H."""
    line_angles = [0, 2, 2, 2] if apply_h else [0, 0, 0, 0]
    p = mbqc.line_pattern(line_angles, prefix="q")
    return Gadget("line", bool(apply_h), p, "q0", [], {})


GADGETS = {"hi": hi_gadget, "line": line_gadget}


def colouring_independence(gadget_h: Gadget, gadget_i: Gadget) -> tuple[bool, list[str]]:
    """Check the two choices may be swapped without the server noticing.

    All angles must be Clifford. Graph, flow, inputs, outputs and order must
    agree. Angles may differ only at vertices with no X-dependency (a sign
    flip there cannot be induced by the server). Returns (ok, reasons).
    """
    a, b = gadget_h.pattern, gadget_i.pattern
    reasons: list[str] = []
    if set(map(frozenset, a.edges)) != set(map(frozenset, b.edges)):
        reasons.append("graphs differ")
    if a.flow != b.flow:
        reasons.append("flows differ")
    if a.inputs != b.inputs or a.outputs != b.outputs:
        reasons.append("inputs or outputs differ")
    if a.measurement_order() != b.measurement_order():
        reasons.append("measurement orders differ")
    for g in (a, b):
        for v, k in {**g.angles, **g.output_angles}.items():
            if not ang.is_clifford(k):
                reasons.append(f"non-Clifford angle {k} at {v!r}")
    for v in a.measured + list(a.output_angles):
        av = a.angles.get(v, a.output_angles.get(v))
        bv = b.angles.get(v, b.output_angles.get(v))
        if av != bv and a.x_dependencies(v):
            reasons.append(f"angle at X-dependent vertex {v!r} differs ({av} vs {bv})")
    return not reasons, reasons


def hi_circuit_corrections(bottom: np.ndarray, simplified: bool = True) -> dict[int, tuple[str, str]]:
    """Corrections of the two-wire H/I circuit for a given bottom state.

    The circuit applies Z(-pi/2) H Z(-pi/2) and X to the bottom wire, CZ
    between the wires, (X on the bottom again unless ``simplified``), CNOT from
    bottom to top, then measures the bottom wire in the X basis. Returns, per
    outcome, (correction, effect) such that correction . top = effect(rho).
    """
    rng = np.random.default_rng(12345)
    probes = []
    for _ in range(3):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        probes.append(v / np.linalg.norm(v))
    rot = qsim.zrot(-2) @ qsim.H @ qsim.zrot(-2)
    bottom = np.asarray(bottom, dtype=complex)
    result: dict[int, tuple[str, str]] = {}
    for outcome in (0, 1):
        found = None
        for eff_name, eff in (("I", qsim.I2), ("H", qsim.H)):
            for cor_name, cor in qsim.PAULIS.items():
                ok = True
                for psi in probes:
                    reg = qsim.StateRegister.from_vector(["top", "bot"], np.kron(psi, bottom))
                    reg.apply(qsim.X @ rot, ["bot"])
                    reg.cz("top", "bot")
                    if not simplified:
                        reg.apply(qsim.X, ["bot"])
                    reg.apply(qsim.CNOT, ["bot", "top"])
                    p0, p1 = reg.probabilities("bot", qsim.xy_basis(0))
                    if (p1 if outcome else p0) < 1e-12:
                        ok = False
                        break
                    reg.measure("bot", qsim.xy_basis(0), outcome=outcome)
                    if not qsim.equal_up_to_phase(cor @ reg.vector(), eff @ psi):
                        ok = False
                        break
                if ok:
                    found = (cor_name, eff_name)
                    break
            if found:
                break
        if found is None:
            raise RuntimeError("circuit output is not a Pauli image of I or H")
        result[outcome] = found
    return result


# -- collaborative encryption --------------------------------------------------


@dataclass
class LocationSecrets:
    """Per-location secrets: each client's angle and bit, and the owner."""

    owner: int
    thetas: dict[int, int]
    rs: dict[int, int]

    def r(self) -> int:
        return sum(self.rs.values()) % 2


def combine(loc: LocationSecrets, t_bits: Mapping[int, int]) -> int:
    """Recombined pad angle from the owner's angle and the CNOT outcomes."""
    others = [j for j in sorted(loc.thetas) if j != loc.owner]
    return ang.combine_theta(loc.thetas[loc.owner], [loc.thetas[j] for j in others], [t_bits[j] for j in others])


def collaborative_prepare(
    store: qsim.QuantumStore,
    owner_qubit: Hashable,
    contributions: Sequence[tuple[int, Hashable]],
    rng: np.random.Generator | None = None,
    chooser=None,
) -> dict[int, int]:
    """Server side of the collaborative pad.

    CNOT from the owner's qubit onto each contributed qubit, then measure the
    contribution in the computational basis. Returns {client: t}.
    """
    t_bits = {}
    for client, q in contributions:
        store.apply(qsim.CNOT, [owner_qubit, q])
        bit, _ = store.measure(q, qsim.Z_BASIS, rng=rng, chooser=chooser)
        t_bits[client] = bit
    return t_bits


# -- blind execution of a pattern ----------------------------------------------


@dataclass
class DbqcRunResult:
    store: qsim.QuantumStore
    outputs: list[Vertex]
    keys: dict[Vertex, tuple[int, int]]
    reported: dict[Vertex, int]
    deltas: dict[Vertex, int]
    t_bits: dict[Vertex, dict[int, int]]
    probability: float = 1.0


def sample_location_secrets(
    p: mbqc.Pattern, n_clients: int, owners: Mapping[Vertex, int], rng: np.random.Generator
) -> dict[Vertex, LocationSecrets]:
    secrets = {}
    for v in p.vertices:
        if v in p.kept_outputs:
            continue
        owner = owners.get(v, n_clients)
        thetas = {j: int(rng.integers(8)) for j in range(1, n_clients + 1)}
        rs = {j: int(rng.integers(2)) for j in range(1, n_clients + 1)}
        secrets[v] = LocationSecrets(owner, thetas, rs)
    return secrets


def prepare_locations(
    p: mbqc.Pattern,
    secrets: Mapping[Vertex, LocationSecrets],
    inputs: Mapping[Vertex, np.ndarray],
    pads: Mapping[Vertex, int],
    rng: np.random.Generator,
    cap: int = qsim.DEFAULT_QUBIT_CAP,
) -> tuple[qsim.QuantumStore, dict[Vertex, int], dict[Vertex, dict[int, int]]]:
    """Clients send padded qubits, the server recombines them.

    Returns the store (one qubit per pattern vertex, named by the vertex, not
    yet entangled), the recombined pad angle per location and the CNOT bits.
    """
    store = qsim.QuantumStore(cap)
    thetas: dict = {}
    t_all: dict = {}
    for v in p.vertices:
        if v in p.kept_outputs:
            store.alloc(v, qsim.PLUS)
            continue
        loc = secrets[v]
        own = loc.thetas[loc.owner]
        if v in p.inputs:
            state = qsim.zrot(own) @ np.linalg.matrix_power(qsim.X, pads.get(v, 0)) @ np.asarray(inputs[v])
        else:
            state = qsim.plus_state(own)
        store.alloc(v, state)
        contributions = []
        for j in sorted(loc.thetas):
            if j == loc.owner:
                continue
            q = (v, "contrib", j)
            store.alloc(q, qsim.plus_state(loc.thetas[j]))
            contributions.append((j, q))
        t_bits = collaborative_prepare(store, v, contributions, rng=rng)
        thetas[v] = combine(loc, t_bits)
        t_all[v] = t_bits
    return store, thetas, t_all


def run_dbqc(
    p: mbqc.Pattern,
    inputs: Mapping[Vertex, np.ndarray],
    n_clients: int,
    rng: np.random.Generator,
    owners: Mapping[Vertex, int] | None = None,
    adaptive: bool = True,
    enumerate_branches: bool = False,
    secrets: Mapping[Vertex, LocationSecrets] | None = None,
    pads: Mapping[Vertex, int] | None = None,
    cap: int = qsim.DEFAULT_QUBIT_CAP,
):
    """Blind, collaboratively padded execution of a pattern.

    Inputs are single-qubit states keyed by input vertex. Returns a
    `DbqcRunResult` (or a list of them, one per measurement branch, when
    ``enumerate_branches``). Output qubits stay padded with ``keys``.
    """
    owners = dict(owners or {})
    for i in p.inputs:
        owners.setdefault(i, 1)
    if secrets is None:
        secrets = sample_location_secrets(p, n_clients, owners, rng)
    if pads is None:
        pads = {i: int(rng.integers(2)) for i in p.inputs}
    store, thetas, t_bits = prepare_locations(p, secrets, inputs, pads, rng, cap)
    for a, b in p.edges:
        store.cz(a, b)
    rs = {v: secrets[v].r() for v in secrets}
    order = p.measurement_order()
    one_shot = {} if adaptive else {v: blind_delta(p, v, thetas[v], rs[v], pads) for v in order}

    def finish(st, reported, deltas, prob):
        if adaptive:
            s = {v: (reported[v] + rs[v]) % 2 for v in order}
        else:
            s = effective_outcomes(p, reported, rs)
        return DbqcRunResult(st, p.kept_outputs, output_keys(p, s, pads), dict(reported), dict(deltas), t_bits, prob)

    results = []
    stack = [(store, {}, {}, 1.0)]
    while stack:
        st, reported, deltas, prob = stack.pop()
        if len(reported) == len(order):
            results.append(finish(st, reported, deltas, prob))
            continue
        v = order[len(reported)]
        if adaptive:
            s = {u: (reported[u] + rs[u]) % 2 for u in reported}
            delta = blind_delta(p, v, thetas[v], rs[v], pads, s)
        else:
            delta = one_shot[v]
        basis = qsim.xy_basis(delta)
        if enumerate_branches:
            p0, p1 = st.probabilities(v, basis)
            for bit, pb in ((1, p1), (0, p0)):
                if pb < qsim.DEGENERATE_BRANCH:
                    continue
                child = st.copy()
                child.measure(v, basis, outcome=bit)
                stack.append((child, {**reported, v: bit}, {**deltas, v: delta}, prob * pb))
        else:
            bit, _ = st.measure(v, basis, rng=rng)
            stack.append((st, {**reported, v: bit}, {**deltas, v: delta}, prob))
    return results if enumerate_branches else results[0]


def decrypt_outputs(result: DbqcRunResult) -> np.ndarray:
    """Undo the output pads in place and return the joint output vector."""
    for o in result.outputs:
        kx, kz = result.keys[o]
        qsim.qotp_apply(result.store, o, kx, kz, decrypt=True)
    return result.store.vector(result.outputs)


# -- gadget execution ----------------------------------------------------------


@dataclass
class GadgetPlan:
    """Orchestrator-side record for one gadget run on one prepared qubit."""

    gadget: Gadget
    secrets: dict[Vertex, LocationSecrets]
    pads: dict[Vertex, int]
    thetas: dict[Vertex, int] = field(default_factory=dict)
    deltas: dict[Vertex, int] = field(default_factory=dict)

    def one_shot_deltas(self) -> dict[Vertex, int]:
        p = self.gadget.pattern
        self.deltas = {v: blind_delta(p, v, self.thetas[v], self.secrets[v].r(), self.pads) for v in p.measurement_order()}
        return self.deltas

    def output_key(self, reported: Mapping[Vertex, int]) -> tuple[int, int]:
        """Pad left on the gadget output relative to G applied to the top input."""
        p = self.gadget.pattern
        rs = {v: self.secrets[v].r() for v in self.secrets}
        s = effective_outcomes(p, reported, rs)
        kx, kz = output_keys(p, s, self.pads)[self.gadget.output]
        rx, rz = self.gadget.residual(s)
        return kx ^ rx, kz ^ rz


def run_gadget(
    gadget: Gadget,
    top_state: np.ndarray,
    secrets: Mapping[Vertex, LocationSecrets],
    pads: Mapping[Vertex, int],
    rng: np.random.Generator,
    cap: int = qsim.DEFAULT_QUBIT_CAP,
) -> list[tuple[float, np.ndarray]]:
    """Blind one-shot run of a gadget on ``top_state``, every branch.

    Clients pad the top input with Z(theta) X^a, auxiliary inputs start as
    |+>. The CNOT bits of the collaborative pad are sampled with ``rng``; the
    gadget measurements are enumerated. Returns (probability, decrypted
    output) per branch, which should equal G applied to ``top_state``.
    """
    p = gadget.pattern
    inputs = {v: qsim.PLUS for v in gadget.aux_inputs}
    inputs[gadget.top_input] = np.asarray(top_state, dtype=complex)
    store, thetas, _ = prepare_locations(p, secrets, inputs, pads, rng, cap)
    for a, b in p.edges:
        store.cz(a, b)
    plan = GadgetPlan(gadget, dict(secrets), dict(pads), thetas)
    deltas = plan.one_shot_deltas()
    order = p.measurement_order()
    out = []
    stack = [(store, {}, 1.0)]
    while stack:
        st, reported, prob = stack.pop()
        if len(reported) == len(order):
            kx, kz = plan.output_key(reported)
            qsim.qotp_apply(st, gadget.output, kx, kz, decrypt=True)
            out.append((prob, st.vector([gadget.output])))
            continue
        v = order[len(reported)]
        basis = qsim.xy_basis(deltas[v])
        p0, p1 = st.probabilities(v, basis)
        for bit, pb in ((0, p0), (1, p1)):
            if pb < qsim.DEGENERATE_BRANCH:
                continue
            child = st.copy()
            child.measure(v, basis, outcome=bit)
            stack.append((child, {**reported, v: bit}, prob * pb))
    return out
