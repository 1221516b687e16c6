"""Measurement patterns on open graphs with causal flow.

A `Pattern` bundles an open graph (vertices, edges, inputs, outputs), a causal
flow on the measured vertices and their base angles. Convention used
throughout: measuring a qubit of the pair CZ(rho x |+>) in the basis
{|+_a>, |-_a>} leaves X^s H Z(-a) rho on the partner, so the two-vertex line
with angle -a implements H Z(a).

Outputs may optionally be measured at the end (``output_angles``); such
vertices keep their flow-derived byproducts and are measured at the adapted
angle after every non-output vertex.
"""

from __future__ import annotations

from collections.abc import Hashable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import angles as ang
from . import qsim

Vertex = Hashable


class FlowError(ValueError):
    """The open graph has no causal flow, or a given map is not one."""


@dataclass
class Pattern:
    vertices: list[Vertex]
    edges: list[tuple[Vertex, Vertex]]
    inputs: list[Vertex]
    outputs: list[Vertex]
    flow: dict[Vertex, Vertex]
    angles: dict[Vertex, int]
    output_angles: dict[Vertex, int] = field(default_factory=dict)
    order: list[Vertex] | None = None

    def __post_init__(self) -> None:
        self.vertices = list(self.vertices)
        self.edges = [tuple(e) for e in self.edges]
        self.inputs = list(self.inputs)
        self.outputs = list(self.outputs)
        self.angles = {v: ang.z8(a) for v, a in self.angles.items()}
        self.output_angles = {v: ang.z8(a) for v, a in self.output_angles.items()}

    # -- graph helpers -----------------------------------------------------

    def neighbours(self, v: Vertex) -> set[Vertex]:
        return {b if a == v else a for a, b in self.edges if v in (a, b)}

    @property
    def measured(self) -> list[Vertex]:
        """Non-output vertices in vertex order."""
        outs = set(self.outputs)
        return [v for v in self.vertices if v not in outs]

    @property
    def kept_outputs(self) -> list[Vertex]:
        return [o for o in self.outputs if o not in self.output_angles]

    def x_dependencies(self, v: Vertex) -> set[Vertex]:
        return {j for j, fj in self.flow.items() if fj == v}

    def z_dependencies(self, v: Vertex) -> set[Vertex]:
        return {j for j, fj in self.flow.items() if j != v and v in self.neighbours(fj)}

    def with_angles(self, angles: Mapping[Vertex, int]) -> Pattern:
        new = Pattern(
            self.vertices, self.edges, self.inputs, self.outputs, dict(self.flow),
            {**self.angles, **angles}, dict(self.output_angles), self.order,
        )
        return new

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        vs = set(self.vertices)
        if len(vs) != len(self.vertices):
            raise FlowError("duplicate vertices")
        for a, b in self.edges:
            if a not in vs or b not in vs or a == b:
                raise FlowError(f"bad edge {(a, b)!r}")
        if not set(self.inputs) <= vs or not set(self.outputs) <= vs:
            raise FlowError("inputs and outputs must be vertices")
        if set(self.angles) != set(self.measured):
            raise FlowError("every non-output vertex needs exactly one angle")
        if not set(self.output_angles) <= set(self.outputs):
            raise FlowError("output angles given for non-outputs")
        check_flow(self.vertices, self.edges, self.inputs, self.outputs, self.flow)
        if self.order is not None:
            expected = set(self.measured) | set(self.output_angles)
            if set(self.order) != expected or len(self.order) != len(expected):
                raise FlowError("order must list each measured vertex once")
            pos = {v: i for i, v in enumerate(self.order)}
            for u, w in _precedence(self):
                if u in pos and w in pos and pos[u] > pos[w]:
                    raise FlowError(f"order puts {w!r} before {u!r}")

    def measurement_order(self) -> list[Vertex]:
        if self.order is not None:
            return list(self.order)
        return default_order(self)


def _neighbour_map(vertices: Sequence[Vertex], edges: Sequence[tuple[Vertex, Vertex]]) -> dict:
    nb: dict = {v: set() for v in vertices}
    for a, b in edges:
        nb[a].add(b)
        nb[b].add(a)
    return nb


def _precedence(p: Pattern) -> list[tuple[Vertex, Vertex]]:
    """Pairs (u, w) meaning u must be measured before w."""
    pairs = []
    for i, fi in p.flow.items():
        pairs.append((i, fi))
        for k in p.neighbours(fi):
            if k != i:
                pairs.append((i, k))
    return pairs


def check_flow(vertices, edges, inputs, outputs, flow: Mapping) -> None:
    """Raise `FlowError` unless ``flow`` is a causal flow."""
    nb = _neighbour_map(vertices, edges)
    non_out = [v for v in vertices if v not in set(outputs)]
    if set(flow) != set(non_out):
        raise FlowError("flow must be defined exactly on the non-outputs")
    images = list(flow.values())
    if len(set(images)) != len(images):
        raise FlowError("flow is not injective")
    if set(images) & set(inputs):
        raise FlowError("flow maps onto an input")
    for i, fi in flow.items():
        if fi not in nb[i]:
            raise FlowError(f"f({i!r}) = {fi!r} is not a neighbour")
    succ: dict = {v: set() for v in vertices}
    for i, fi in flow.items():
        succ[i].add(fi)
        for k in nb[fi]:
            if k != i:
                succ[i].add(k)
    state: dict = {}

    def visit(v):
        state[v] = 1
        for w in succ[v]:
            if state.get(w) == 1:
                raise FlowError("flow order has a cycle")
            if w not in state:
                visit(w)
        state[v] = 2

    for v in vertices:
        if v not in state:
            visit(v)


def find_flow(vertices, edges, inputs, outputs) -> dict:
    """Causal flow by layer-peeling from the outputs backwards.

    Returns the flow map or raises `FlowError` when none exists.
    """
    nb = _neighbour_map(vertices, edges)
    vset = set(vertices)
    processed = set(outputs)
    correctors = set(outputs) - set(inputs)
    flow: dict = {}
    while True:
        new_out: set = set()
        used: set = set()
        for v in sorted(correctors, key=vertices.index):
            cand = nb[v] - processed
            if len(cand) == 1:
                (u,) = cand
                if u in new_out:
                    continue
                flow[u] = v
                new_out.add(u)
                used.add(v)
        if not new_out:
            if processed == vset:
                return {v: flow[v] for v in vertices if v in flow}
            raise FlowError("open graph has no causal flow")
        processed |= new_out
        correctors = (correctors - used) | (new_out - set(inputs))


def dependency_sets(p: Pattern) -> tuple[dict, dict]:
    """(S_X, S_Z) for every vertex, as used by the corrected angles."""
    return (
        {v: p.x_dependencies(v) for v in p.vertices},
        {v: p.z_dependencies(v) for v in p.vertices},
    )


def default_order(p: Pattern) -> list[Vertex]:
    """Topological order of the measured vertices, ties broken by vertex order."""
    measured = set(p.measured)
    before: dict = {v: set() for v in measured}
    for u, w in _precedence(p):
        if u in measured and w in measured:
            before[w].add(u)
    index = {v: i for i, v in enumerate(p.vertices)}
    done: list = []
    remaining = set(measured)
    while remaining:
        ready = sorted((v for v in remaining if before[v] <= set(done)), key=index.__getitem__)
        if not ready:
            raise FlowError("no measurement order consistent with the flow")
        done.append(ready[0])
        remaining.discard(ready[0])
    tail = [o for o in p.outputs if o in p.output_angles]
    return done + tail


# -- standard patterns -------------------------------------------------------


def line_pattern(line_angles: Sequence[int], prefix: str = "q") -> Pattern:
    """Line graph q0 - q1 - ... - qn with input q0, output qn.

    ``line_angles`` gives the angles of q0..q(n-1).
    """
    n = len(line_angles) + 1
    vs = [f"{prefix}{i}" for i in range(n)]
    return Pattern(
        vertices=vs,
        edges=[(vs[i], vs[i + 1]) for i in range(n - 1)],
        inputs=[vs[0]],
        outputs=[vs[-1]],
        flow={vs[i]: vs[i + 1] for i in range(n - 1)},
        angles={vs[i]: a for i, a in enumerate(line_angles)},
    )


def two_line(phi: int) -> Pattern:
    """The two-vertex base pattern on vertices 1 and 2."""
    return Pattern([1, 2], [(1, 2)], [1], [2], {1: 2}, {1: phi})


# -- execution ---------------------------------------------------------------


def _initial_register(p: Pattern, input_state, cap: int) -> qsim.StateRegister:
    if isinstance(input_state, qsim.StateRegister):
        reg = input_state.copy()
        reg.cap = max(cap, len(reg))
        if set(reg.qubits) != set(p.inputs):
            raise ValueError("input register must hold exactly the input vertices")
    else:
        vec = np.asarray(input_state, dtype=complex).reshape(-1)
        if vec.size != 2 ** len(p.inputs):
            raise ValueError("input vector has the wrong dimension")
        reg = qsim.StateRegister.from_vector(p.inputs, vec, cap=cap) if p.inputs else qsim.StateRegister(cap)
    for v in p.vertices:
        if v not in p.inputs:
            reg.alloc(v, qsim.PLUS)
    for a, b in p.edges:
        reg.cz(a, b)
    return reg


def signals(p: Pattern, v: Vertex, outcomes: Mapping[Vertex, int]) -> tuple[int, int]:
    """(s_X, s_Z) for vertex v from the outcomes measured so far."""
    s_x = sum(outcomes[j] for j in p.x_dependencies(v)) % 2
    s_z = sum(outcomes[j] for j in p.z_dependencies(v)) % 2
    return s_x, s_z


def _angle_of(p: Pattern, v: Vertex) -> int:
    return p.angles[v] if v in p.angles else p.output_angles[v]


def _correct_outputs(p: Pattern, reg: qsim.StateRegister, outcomes: Mapping) -> None:
    for o in p.kept_outputs:
        s_x, s_z = signals(p, o, outcomes)
        if s_x:
            reg.apply(qsim.X, [o])
        if s_z:
            reg.apply(qsim.Z, [o])


def run_mbqc(
    p: Pattern,
    input_state,
    rng: np.random.Generator | None = None,
    forced: Mapping[Vertex, int] | None = None,
    cap: int = qsim.DEFAULT_QUBIT_CAP,
) -> tuple[qsim.StateRegister, dict]:
    """Run a pattern with adaptive corrections.

    Returns the corrected output register (measured outputs removed) and the
    outcome of every measured vertex.
    """
    reg = _initial_register(p, input_state, cap)
    outcomes: dict = {}
    for v in p.measurement_order():
        s_x, s_z = signals(p, v, outcomes)
        basis = qsim.xy_basis(ang.corrected_angle(_angle_of(p, v), s_x, s_z))
        bit, _ = reg.measure(v, basis, rng=rng, outcome=None if forced is None else forced.get(v))
        outcomes[v] = bit
    _correct_outputs(p, reg, outcomes)
    return reg, outcomes


def enumerate_mbqc(
    p: Pattern, input_state, cap: int = qsim.DEFAULT_QUBIT_CAP
) -> Iterator[tuple[float, dict, qsim.StateRegister]]:
    """Every non-degenerate branch as (probability, outcomes, corrected outputs)."""
    order = p.measurement_order()
    stack = [(1.0, {}, _initial_register(p, input_state, cap), 0)]
    while stack:
        prob, outcomes, reg, depth = stack.pop()
        if depth == len(order):
            _correct_outputs(p, reg, outcomes)
            yield prob, outcomes, reg
            continue
        v = order[depth]
        s_x, s_z = signals(p, v, outcomes)
        basis = qsim.xy_basis(ang.corrected_angle(_angle_of(p, v), s_x, s_z))
        for bit, pb, child in reversed(reg.branch(v, basis)):
            stack.append((prob * pb, {**outcomes, v: bit}, child, depth + 1))


def pattern_operator(p: Pattern) -> np.ndarray:
    """Linear map of the all-zero branch, rescaled to be norm preserving.

    Built by plain matrix algebra on the full graph state, without the
    register simulator. Rows index the unmeasured outputs (in ``kept_outputs``
    order), columns the inputs (in ``inputs`` order).
    """
    n = len(p.vertices)
    index = {v: i for i, v in enumerate(p.vertices)}
    k_in = len(p.inputs)
    cols = []
    for col in range(2**k_in):
        bits = [(col >> (k_in - 1 - j)) & 1 for j in range(k_in)]
        psi = np.ones(1, dtype=complex)
        for v in p.vertices:
            if v in p.inputs:
                vec = qsim.KET1 if bits[p.inputs.index(v)] else qsim.KET0
            else:
                vec = qsim.PLUS
            psi = np.kron(psi, vec)
        for a, b in p.edges:
            ia, ib = index[a], index[b]
            for basis in range(2**n):
                if (basis >> (n - 1 - ia)) & 1 and (basis >> (n - 1 - ib)) & 1:
                    psi[basis] = -psi[basis]
        cols.append(psi)
    full = np.column_stack(cols).reshape([2] * n + [2**k_in])
    measured = [v for v in p.vertices if v in p.angles or v in p.output_angles]
    remaining = list(p.vertices)
    for v in measured:
        bra = qsim.plus_state(_angle_of(p, v)).conj()
        full = np.tensordot(bra, full, axes=([0], [remaining.index(v)]))
        remaining.remove(v)
    perm = [remaining.index(o) for o in p.kept_outputs]
    full = np.transpose(full, perm + [len(remaining)])
    op = full.reshape(2 ** len(p.kept_outputs), 2**k_in)
    return op * np.sqrt(2.0) ** len(measured)
