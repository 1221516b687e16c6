"""Trap-based verification on the dotted-triple graph.

Every base vertex v becomes three primary vertices ("p", v, k). Every base
edge e = (u, w) becomes nine added vertices ("a", e, k, l), each joined to
("p", u, k) and ("p", w, l). A colouring picks, per base vertex, which
primary position holds the computation, the trap and the dummy. It then
fixes the added roles: (comp, comp) computes, (dummy, dummy) is a trap and
the other seven are dummies. Dummies are prepared in |d> and cut their
neighbours out of the graph. Traps end up isolated |+_theta> states whose
outcome the client predicts exactly.

Edges incident to an input may be bridged. Their added computation vertex is
measured first at pi/2, which fuses the two ends into a direct edge. The
Z-rotation owed to both ends is folded into their pads. Other added
computation vertices are measured at angle 0 in flow order.
"""

from __future__ import annotations

import itertools
from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import angles as ang
from . import mbqc, qsim
from .ubqc import pad_z

Vertex = Hashable
COMPUTATION, TRAP, DUMMY = "computation", "trap", "dummy"
BRIDGE_ANGLE = ang.HALF_PI


def bridge(
    reg: qsim.StateRegister,
    end_a: Vertex,
    middle: Vertex,
    end_b: Vertex,
    outcome: int | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[int, float]:
    """Fuse end_a and end_b through a fresh |+> middle qubit.

    The middle is entangled with both ends, measured at pi/2 and the owed
    rotation is applied to both ends. The net effect is CZ(end_a, end_b).
    """
    reg.alloc(middle, qsim.PLUS)
    reg.cz(end_a, middle)
    reg.cz(middle, end_b)
    b, prob = reg.measure(middle, qsim.xy_basis(BRIDGE_ANGLE), rng=rng, outcome=outcome)
    corr = qsim.zrot(ang.bridge_correction(b))
    reg.apply(corr, [end_a])
    reg.apply(corr, [end_b])
    return b, prob


def primary(v: Vertex, k: int) -> tuple:
    return ("p", v, k)


def added(e: tuple, k: int, l: int) -> tuple:
    return ("a", e, k, l)


@dataclass
class DTGraph:
    base_vertices: list[Vertex]
    base_edges: list[tuple[Vertex, Vertex]]
    vertices: list[tuple]
    edges: list[tuple[tuple, tuple]]
    primary_sets: dict[Vertex, list[tuple]]
    added_sets: dict[tuple, list[tuple]]
    _nb: dict = field(default_factory=dict, repr=False)

    def neighbours(self, x: tuple) -> list[tuple]:
        return self._nb[x]

    def base_edge(self, u: Vertex, w: Vertex) -> tuple:
        """The stored orientation of base edge {u, w}."""
        for e in self.base_edges:
            if set(e) == {u, w}:
                return e
        raise KeyError(f"no base edge between {u!r} and {w!r}")

    def location(self, x: tuple) -> tuple:
        """Base location label of a DT vertex: ("p", v) or ("a", e)."""
        return x[:2]


def build_dtg(base_vertices: Sequence[Vertex], base_edges: Sequence[tuple[Vertex, Vertex]]) -> DTGraph:
    base_edges = [tuple(e) for e in base_edges]
    primary_sets = {v: [primary(v, k) for k in range(3)] for v in base_vertices}
    added_sets: dict = {}
    vertices = [x for v in base_vertices for x in primary_sets[v]]
    edges = []
    for e in base_edges:
        u, w = e
        added_sets[e] = []
        for k in range(3):
            for l in range(3):
                a = added(e, k, l)
                added_sets[e].append(a)
                vertices.append(a)
                edges.append((primary(u, k), a))
                edges.append((a, primary(w, l)))
    nb: dict = {x: [] for x in vertices}
    for a, b in edges:
        nb[a].append(b)
        nb[b].append(a)
    return DTGraph(list(base_vertices), base_edges, vertices, edges, primary_sets, added_sets, nb)


# -- colourings ----------------------------------------------------------------


@dataclass(frozen=True)
class Colouring:
    """Primary positions per base vertex: v -> (computation, trap, dummy)."""

    positions: tuple[tuple[Vertex, tuple[int, int, int]], ...]

    @property
    def table(self) -> dict[Vertex, tuple[int, int, int]]:
        return dict(self.positions)

    def computation_position(self, v: Vertex) -> int:
        return self.table[v][0]

    def role(self, x: tuple) -> str:
        table = self.table
        if x[0] == "p":
            c, t, _ = table[x[1]]
            return COMPUTATION if x[2] == c else TRAP if x[2] == t else DUMMY
        (u, w), k, l = x[1], x[2], x[3]
        cu, _, du = table[u]
        cw, _, dw = table[w]
        if k == cu and l == cw:
            return COMPUTATION
        if k == du and l == dw:
            return TRAP
        return DUMMY

    def roles(self, dt: DTGraph) -> dict[tuple, str]:
        return {x: self.role(x) for x in dt.vertices}

    def computation_vertex(self, dt: DTGraph, loc: tuple) -> tuple:
        """The computation DT vertex of a base location ("p", v) or ("a", e)."""
        table = self.table
        if loc[0] == "p":
            return primary(loc[1], table[loc[1]][0])
        u, w = loc[1]
        return added(loc[1], table[u][0], table[w][0])


_PERMS = list(itertools.permutations(range(3)))


def enumerate_colourings(dt: DTGraph, fixed_computation: Mapping[Vertex, int] | None = None) -> list[Colouring]:
    """All colourings, optionally with some computation positions pinned."""
    fixed = dict(fixed_computation or {})
    choices = []
    for v in dt.base_vertices:
        opts = [p for p in _PERMS if v not in fixed or p[0] == fixed[v]]
        choices.append([(v, p) for p in opts])
    return [Colouring(tuple(combo)) for combo in itertools.product(*choices)]


def validate_colouring(dt: DTGraph, roles: Mapping[tuple, str]) -> list[str]:
    """Problems with a role assignment; empty when it is a valid colouring.

    Each primary and added set holds exactly one computation and one trap
    vertex, added computation vertices join two computation primaries, and
    every trap is surrounded by dummies.
    """
    problems = []
    for label, group in [*dt.primary_sets.items(), *dt.added_sets.items()]:
        rs = [roles[x] for x in group]
        if rs.count(COMPUTATION) != 1 or rs.count(TRAP) != 1:
            problems.append(f"set {label!r} needs one computation and one trap vertex")
    for x in dt.vertices:
        nb = [roles[y] for y in dt.neighbours(x)]
        if roles[x] == TRAP and any(r != DUMMY for r in nb):
            problems.append(f"trap {x!r} has a non-dummy neighbour")
        if roles[x] == COMPUTATION and x[0] == "a" and any(r != COMPUTATION for r in nb):
            problems.append(f"computation vertex {x!r} is not between computation vertices")
    return problems


def sample_colouring(
    dt: DTGraph, rng: np.random.Generator, fixed_computation: Mapping[Vertex, int] | None = None
) -> Colouring:
    fixed = dict(fixed_computation or {})
    rows = []
    for v in dt.base_vertices:
        if v in fixed:
            rest = [k for k in range(3) if k != fixed[v]]
            if rng.integers(2):
                rest.reverse()
            rows.append((v, (fixed[v], rest[0], rest[1])))
        else:
            rows.append((v, _PERMS[int(rng.integers(6))]))
    return Colouring(tuple(rows))


# -- computation on the dotted graph ---------------------------------------------


def dot(e: tuple) -> tuple:
    return ("dot", e)


def computation_pattern(base: mbqc.Pattern, bridged: Sequence[tuple] = ()) -> mbqc.Pattern:
    """Pattern actually computed on the DT graph.

    Bridged edges stay direct edges. Every other edge gains a middle vertex
    at angle 0. The flow is inherited from the base flow when possible.
    """
    bridged_sets = {frozenset(e) for e in bridged}
    vertices = list(base.vertices)
    edges = []
    flow = {}
    for e in base.edges:
        if frozenset(e) in bridged_sets:
            edges.append(tuple(e))
        else:
            m = dot(tuple(e))
            vertices.append(m)
            edges.extend([(e[0], m), (m, e[1])])
    angles = dict(base.angles)
    for v in vertices:
        if isinstance(v, tuple) and v[:1] == ("dot",):
            angles[v] = 0
    induced = True
    for v, w in base.flow.items():
        e = next(tuple(x) for x in base.edges if set(x) == {v, w})
        if frozenset(e) in bridged_sets:
            flow[v] = w
        else:
            flow[v] = dot(e)
            flow[dot(e)] = w
    for e in base.edges:
        if frozenset(e) not in bridged_sets and dot(tuple(e)) not in flow:
            induced = False
    if induced:
        try:
            mbqc.check_flow(vertices, edges, base.inputs, base.outputs, flow)
        except mbqc.FlowError:
            induced = False
    if not induced:
        flow = mbqc.find_flow(vertices, edges, base.inputs, base.outputs)
    return mbqc.Pattern(vertices, edges, base.inputs, base.outputs, flow, angles)


def default_bridges(base: mbqc.Pattern) -> list[tuple]:
    """Edges incident to an input vertex."""
    ins = set(base.inputs)
    return [tuple(e) for e in base.edges if ins & set(e)]


def eff_to_dt(colouring: Colouring, dt: DTGraph, u: Vertex) -> tuple:
    if isinstance(u, tuple) and u[:1] == ("dot",):
        return colouring.computation_vertex(dt, ("a", u[1]))
    return colouring.computation_vertex(dt, ("p", u))


def schedule(
    dt: DTGraph,
    eff: mbqc.Pattern,
    bridged: Sequence[tuple],
    rng: np.random.Generator | None = None,
) -> list[list[tuple]]:
    """Measurement layers of server-measured DT vertices.

    The first layer holds every bridged added set. Then one layer per depth
    of the computation pattern, each holding the full base location (three
    or nine qubits) of every computation vertex at that depth. Within a
    location the order is a random permutation.
    """
    def shuffled(xs):
        xs = list(xs)
        if rng is not None:
            xs = [xs[i] for i in rng.permutation(len(xs))]
        return xs

    layers: list[list[tuple]] = []
    bridged = [dt.base_edge(*e) for e in bridged]
    if bridged:
        layers.append([x for e in bridged for x in shuffled(dt.added_sets[e])])
    order = eff.measurement_order()
    depth: dict = {}
    measured = set(order)
    for v in order:
        preds = [u for u, w in mbqc._precedence(eff) if w == v and u in measured]
        depth[v] = 1 + max((depth[u] for u in preds), default=-1)
    for level in range(max(depth.values(), default=-1) + 1):
        layer = []
        for v in order:
            if depth[v] != level:
                continue
            if isinstance(v, tuple) and v[:1] == ("dot",):
                layer.extend(shuffled(dt.added_sets[dt.base_edge(*v[1])]))
            else:
                layer.extend(shuffled(dt.primary_sets[v]))
        layers.append(layer)
    return layers


# -- secrets, preparation and angles ----------------------------------------------


@dataclass
class VbqcSecrets:
    theta: dict[tuple, int]
    r: dict[tuple, int]
    d: dict[tuple, int]
    a: dict[tuple, int]
    dummy_angle: dict[tuple, int]

    @classmethod
    def sample(cls, dt: DTGraph, colouring: Colouring, inputs: Sequence[Vertex], rng: np.random.Generator) -> VbqcSecrets:
        theta, r, d, a, dummy_angle = {}, {}, {}, {}, {}
        for x in dt.vertices:
            role = colouring.role(x)
            if role == DUMMY:
                d[x] = int(rng.integers(2))
                dummy_angle[x] = int(rng.integers(8))
            else:
                theta[x] = int(rng.integers(8))
                r[x] = int(rng.integers(2))
        for i in inputs:
            a[colouring.computation_vertex(dt, ("p", i))] = int(rng.integers(2))
        return cls(theta, r, d, a, dummy_angle)


def prepared_state(x: tuple, role: str, secrets: VbqcSecrets, input_state: np.ndarray | None = None) -> np.ndarray:
    """Single-qubit state the client sends for DT vertex x.

    Dummies are |d>. Padded inputs are Z(theta) X^a rho. Every other
    non-dummy is |+_theta>; the pi shift from dummy neighbours is accounted
    for in the measurement angle instead.
    """
    if role == DUMMY:
        return qsim.KET1 if secrets.d[x] else qsim.KET0
    if input_state is not None:
        return qsim.zrot(secrets.theta[x]) @ np.linalg.matrix_power(qsim.X, secrets.a.get(x, 0)) @ np.asarray(input_state)
    return qsim.plus_state(secrets.theta[x])


def dummy_parity(dt: DTGraph, colouring: Colouring, secrets: VbqcSecrets, x: tuple) -> int:
    return sum(secrets.d[y] for y in dt.neighbours(x) if colouring.role(y) == DUMMY) % 2


@dataclass
class OutputKey:
    """Pad on an output: physical = Z(rot) X^kx Z^kz (logical)."""

    rot: int
    kx: int
    kz: int

    def decrypt(self, target, qid) -> None:
        target.apply(qsim.zrot(-self.rot), [qid])
        qsim.qotp_apply(target, qid, self.kx, self.kz, decrypt=True)

    def operator(self) -> np.ndarray:
        return qsim.zrot(self.rot) @ qsim.pauli_word(self.kx, self.kz)


class VbqcSession:
    """Client-side classical state of one verifiable run.

    Knows the colouring and the secrets, turns each DT vertex into a
    measurement angle, folds bridge outcomes into the pads, checks traps and
    derives the output keys.
    """

    def __init__(
        self,
        base: mbqc.Pattern,
        dt: DTGraph,
        colouring: Colouring,
        secrets: VbqcSecrets,
        bridged: Sequence[tuple] | None = None,
    ) -> None:
        self.base = base
        self.dt = dt
        self.colouring = colouring
        self.secrets = secrets
        self.bridged = [dt.base_edge(*e) for e in (default_bridges(base) if bridged is None else bridged)]
        self.eff = computation_pattern(base, self.bridged)
        self.theta = dict(secrets.theta)
        self.s: dict = {}
        self.reported: dict = {}
        self.comp_of = {eff_to_dt(colouring, dt, u): u for u in self.eff.vertices}
        self.bridge_middles = {colouring.computation_vertex(dt, ("a", e)): e for e in self.bridged}
        self.eff_pads = {i: secrets.a[eff_to_dt(colouring, dt, i)] for i in base.inputs}
        self.roles = colouring.roles(dt)

    def role(self, x: tuple) -> str:
        return self.roles[x]

    def delta(self, x: tuple) -> int:
        role = self.roles[x]
        if role == DUMMY:
            return self.secrets.dummy_angle[x]
        dbits = [self.secrets.d[y] for y in self.dt.neighbours(x) if self.roles[y] == DUMMY]
        theta, r = self.theta[x], self.secrets.r[x]
        if role == TRAP:
            return ang.vbqc_delta(0, theta, r, 0, 0, dbits)
        if x in self.bridge_middles:
            return ang.vbqc_delta(BRIDGE_ANGLE, theta, r, 0, 0, dbits)
        u = self.comp_of[x]
        s_x, s_z = mbqc.signals(self.eff, u, self.s)
        if u in self.eff.inputs:
            s_x ^= self.eff_pads[u]
        s_z ^= pad_z(self.eff, u, self.eff_pads)
        return ang.vbqc_delta(self.eff.angles.get(u, 0), theta, r, s_x, s_z, dbits)

    def record(self, x: tuple, bit: int) -> None:
        """Store a reported outcome and fold its consequences."""
        self.reported[x] = bit
        role = self.roles[x]
        if role == DUMMY or role == TRAP:
            return
        logical = (bit + self.secrets.r[x]) % 2
        if x in self.bridge_middles:
            u, w = self.bridge_middles[x]
            for end in (u, w):
                y = self.colouring.computation_vertex(self.dt, ("p", end))
                self.theta[y] = ang.bridge_update(self.theta[y], logical)
            return
        self.s[self.comp_of[x]] = logical

    def trap_ok(self, x: tuple, bit: int) -> bool:
        return bit % 2 == self.secrets.r[x]

    def traps_ok(self, outcomes: Mapping[tuple, int]) -> bool:
        return all(self.trap_ok(x, b) for x, b in outcomes.items() if self.roles[x] == TRAP)

    def output_vertices(self) -> dict[Vertex, tuple]:
        return {o: self.colouring.computation_vertex(self.dt, ("p", o)) for o in self.base.outputs}

    def output_key(self, o: Vertex) -> OutputKey:
        x = self.colouring.computation_vertex(self.dt, ("p", o))
        s_x, s_z = mbqc.signals(self.eff, o, self.s)
        s_z ^= pad_z(self.eff, o, self.eff_pads)
        rot = (self.theta[x] + ang.PI * dummy_parity(self.dt, self.colouring, self.secrets, x)) % 8
        return OutputKey(rot, s_x, s_z)

    def output_traps(self) -> list[tuple]:
        return [x for o in self.base.outputs for x in self.dt.primary_sets[o] if self.roles[x] == TRAP]

    def output_dummies(self) -> list[tuple]:
        return [x for o in self.base.outputs for x in self.dt.primary_sets[o] if self.roles[x] == DUMMY]


# -- standalone run -------------------------------------------------------------


def ideal_output(base: mbqc.Pattern, inputs: Mapping[Vertex, np.ndarray], bridged: Sequence[tuple] | None = None) -> np.ndarray:
    """Exact output of the computation realised on the DT graph."""
    bridged = default_bridges(base) if bridged is None else bridged
    eff = computation_pattern(base, bridged)
    vec = np.ones(1, dtype=complex)
    for i in base.inputs:
        vec = np.kron(vec, np.asarray(inputs[i], dtype=complex))
    return mbqc.pattern_operator(eff) @ vec


@dataclass
class VbqcLeaf:
    probability: float
    accepted: bool
    fidelity: float
    reported: dict
    output_density: np.ndarray


@dataclass
class VbqcResult:
    colouring: Colouring
    leaves: list[VbqcLeaf]

    @property
    def accept_probability(self) -> float:
        return sum(l.probability for l in self.leaves if l.accepted)

    @property
    def abort_probability(self) -> float:
        return sum(l.probability for l in self.leaves if not l.accepted)

    def undetected_error(self, tol: float = 1e-9) -> float:
        """Probability of accepting a wrong output."""
        return sum(l.probability for l in self.leaves if l.accepted and l.fidelity < 1 - tol)


def _hook(deviation, name):
    return getattr(deviation, name, None) if deviation is not None else None


def run_vbqc(
    base: mbqc.Pattern,
    inputs: Mapping[Vertex, np.ndarray],
    rng: np.random.Generator,
    colouring: Colouring | None = None,
    secrets: VbqcSecrets | None = None,
    bridged: Sequence[tuple] | None = None,
    deviation=None,
    enumerate_branches: bool = False,
    cap: int = qsim.DEFAULT_QUBIT_CAP,
    merge_dummies: bool = False,
    stop_on_abort: bool = False,
) -> VbqcResult:
    """One client delegating ``base`` to a server on the DT graph.

    ``deviation`` may define any of ``after_prepare(store, dt)``,
    ``after_entangle(store, dt)``, ``before_measure(store, x)``,
    ``report(x, bit)`` and ``before_return(store, qubits)``; it never sees the
    colouring or the secrets.

    Two exact reductions of the enumeration are available. With
    ``merge_dummies`` a dummy whose reduced state is pure is measured on one
    branch with weight 1: it is unentangled, so both outcomes leave the rest
    of the state unchanged, and dummy outcomes feed nothing downstream.
    With ``stop_on_abort`` a branch is closed as soon as a trap fails; its
    leaf carries no output state.
    """
    dt = build_dtg(base.vertices, base.edges)
    colouring = colouring or sample_colouring(dt, rng)
    secrets = secrets or VbqcSecrets.sample(dt, colouring, base.inputs, rng)
    session = VbqcSession(base, dt, colouring, secrets, bridged)
    ideal = ideal_output(base, inputs, session.bridged)

    store = qsim.QuantumStore(cap)
    input_of = {colouring.computation_vertex(dt, ("p", i)): i for i in base.inputs}
    for x in dt.vertices:
        state = inputs[input_of[x]] if x in input_of else None
        store.alloc(x, prepared_state(x, session.role(x), secrets, state))
    if hook := _hook(deviation, "after_prepare"):
        hook(store, dt)
    for a, b in dt.edges:
        store.cz_lazy(a, b)
    if hook := _hook(deviation, "after_entangle"):
        hook(store, dt)

    steps = [x for layer in schedule(dt, session.eff, session.bridged, rng) for x in layer]
    out_traps = session.output_traps()
    outputs = session.output_vertices()
    out_order = [outputs[o] for o in base.outputs]
    steps_total = len(steps) + len(out_traps)
    leaves: list[VbqcLeaf] = []

    def snapshot(sess: VbqcSession) -> VbqcSession:
        new = object.__new__(VbqcSession)
        new.__dict__.update(sess.__dict__)
        new.theta = dict(sess.theta)
        new.s = dict(sess.s)
        new.reported = dict(sess.reported)
        return new

    stack = [(store, session, 0, 1.0, True)]
    while stack:
        st, sess, i, prob, ok = stack.pop()
        if stop_on_abort and not ok:
            leaves.append(VbqcLeaf(prob, False, float("nan"), dict(sess.reported), None))
            continue
        if i == len(steps) and (hook := _hook(deviation, "before_return")):
            hook(st, out_order + out_traps + session.output_dummies())
        if i == steps_total:
            for o in base.outputs:
                sess.output_key(o).decrypt(st, outputs[o])
            rho = st.density(out_order)
            leaves.append(VbqcLeaf(prob, ok, qsim.fidelity(ideal, rho), dict(sess.reported), rho))
            continue
        server_side = i < len(steps)
        x = steps[i] if server_side else out_traps[i - len(steps)]
        if server_side and (hook := _hook(deviation, "before_measure")):
            hook(st, x)
        basis = qsim.xy_basis(sess.delta(x))
        if enumerate_branches:
            p0, p1 = st.probabilities(x, basis)
            branches = [(b, pb) for b, pb in ((1, p1), (0, p0)) if pb >= qsim.DEGENERATE_BRANCH]
            if merge_dummies and session.role(x) == DUMMY and len(branches) == 2:
                rho = st.density([x])
                if np.real(np.trace(rho @ rho)) > 1 - 1e-12:
                    branches = [branches[-1]]
        else:
            branches = [None]
        for br in branches:
            child_store = st.copy() if enumerate_branches else st
            if br is None:
                bit, pb = child_store.measure(x, basis, rng=rng)
            else:
                bit, pb = child_store.measure(x, basis, outcome=br[0])
            if server_side and (hook := _hook(deviation, "report")):
                bit = hook(x, bit)
            child = snapshot(sess) if enumerate_branches else sess
            child.record(x, bit)
            good = ok and (session.role(x) != TRAP or child.trap_ok(x, bit))
            weight = pb if enumerate_branches and len(branches) > 1 else 1.0
            stack.append((child_store, child, i + 1, prob * weight, good))
    return VbqcResult(colouring, leaves)
