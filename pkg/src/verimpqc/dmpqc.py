"""Delegated multi-party quantum computation, end to end.

`run_dmpqc` wires N clients, one server and the classical SMPC over the
simulated network:

1. each client samples its pad secrets, reports them to the SMPC and sends
   one batch of qubits to the server (its input, |+_theta> states and
   contributions to every other location);
2. the server recombines the pads and runs one gadget per dotted-triple
   vertex with angles sent by the SMPC in a single batch;
3. the server entangles the dotted-triple graph;
4. the bridged edges are measured first, then the remaining layers;
5. every layer is one SMPC call;
6. outputs go back to their owners (or are measured, in classical mode) and
   keys are released only after every trap has passed.

Ideal resources (`ideal_mpqc`, `ideal_vdqc`) give the oracle the run is
compared against.
"""

from __future__ import annotations

import hashlib
import json
import time
from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import mbqc, qsim, vbqc
from .net import Interceptor, Message, Party, World, run_world
from .smpc import SERVER, SMPC, Layout, SmpcFunctionality, client_name

Vertex = Hashable


# -- adversary interface ---------------------------------------------------------


class HeldQubits:
    """Quantum access restricted to the qubits a party currently holds."""

    def __init__(self, world: World, party: str) -> None:
        self._world = world
        self.party = party

    def holds(self, qid: Hashable) -> bool:
        return self._world.owner.get(qid) == self.party

    def apply(self, matrix: np.ndarray, qid: Hashable) -> None:
        self._world.require_owner(self.party, [qid])
        self._world.store.apply(matrix, [qid])

    def pauli(self, name: str, qid: Hashable) -> None:
        self.apply(qsim.PAULIS[name], qid)


@dataclass
class AdversaryView:
    """Everything the server legitimately sees.

    ``received`` holds (kind, payload) of authenticated messages to the
    server. Secure traffic never reaches the server, so it is absent.
    """

    layout: Layout
    received: list[tuple[str, dict]] = field(default_factory=list)
    outcomes: dict[Hashable, int] = field(default_factory=dict)


class ServerBehaviour:
    """Server hooks. This base class is the honest server."""

    def after_dbqc(self, view: AdversaryView, held: HeldQubits) -> None:
        pass

    def gadget_report(self, view: AdversaryView, x: tuple, outcomes: dict) -> dict:
        return outcomes

    def after_gadget(self, view: AdversaryView, held: HeldQubits, x: tuple) -> None:
        pass

    def after_entangle(self, view: AdversaryView, held: HeldQubits) -> None:
        pass

    def before_measure(self, view: AdversaryView, held: HeldQubits, x: tuple) -> None:
        pass

    def report(self, view: AdversaryView, x: tuple, bit: int) -> int:
        return bit

    def before_return(self, view: AdversaryView, held: HeldQubits, qubits: Sequence[tuple]) -> None:
        pass


class ClientBehaviour:
    """Client hooks for a malicious client. The base class is honest."""

    def trap_report(self, x: tuple, bit: int) -> int:
        return bit


class CombinedBehaviour(ServerBehaviour):
    """Applies several server deviations in sequence."""

    def __init__(self, parts: Sequence[ServerBehaviour]) -> None:
        self.parts = list(parts)

    def after_dbqc(self, view, held):
        for p in self.parts:
            p.after_dbqc(view, held)

    def gadget_report(self, view, x, outcomes):
        for p in self.parts:
            outcomes = p.gadget_report(view, x, outcomes)
        return outcomes

    def after_gadget(self, view, held, x):
        for p in self.parts:
            p.after_gadget(view, held, x)

    def after_entangle(self, view, held):
        for p in self.parts:
            p.after_entangle(view, held)

    def before_measure(self, view, held, x):
        for p in self.parts:
            p.before_measure(view, held, x)

    def report(self, view, x, bit):
        for p in self.parts:
            bit = p.report(view, x, bit)
        return bit

    def before_return(self, view, held, qubits):
        for p in self.parts:
            p.before_return(view, held, qubits)


# -- parties ----------------------------------------------------------------------


class Client(Party):
    """Client j: supplies pads and inputs, receives and decrypts outputs."""

    shared_attrs = ("layout", "inputs")

    def __init__(
        self,
        j: int,
        layout: Layout,
        inputs: Mapping[Vertex, np.ndarray],
        rng: np.random.Generator,
        positions: Mapping[Vertex, int] | None = None,
        behaviour: ClientBehaviour | None = None,
    ) -> None:
        super().__init__(client_name(j))
        self.j = j
        self.layout = layout
        self.inputs = dict(inputs)
        self.rng = rng
        self.positions = dict(positions or {})
        self.behaviour = behaviour or ClientBehaviour()
        self.outcome: str | None = None
        self.results: dict[Vertex, tuple] = {}
        self.bits: dict[Vertex, int] = {}
        self.failed: list = []
        self._traps: dict[Vertex, dict] | None = None
        self._held: set[tuple] = set()
        self._expected: set[tuple] = set()
        self._trap_outcomes: dict[tuple, int] = {}

    def shared_objects(self) -> list[Any]:
        return self.layout.frozen() + [self.inputs]

    def owns_outputs(self) -> bool:
        return self.j in self.layout.output_owner.values()

    def start(self, world: World) -> list[Message]:
        lay = self.layout
        thetas, rs = {}, {}
        for x in lay.dt.vertices:
            for loc in lay.locations:
                thetas[(x, loc)] = int(self.rng.integers(8))
                rs[(x, loc)] = int(self.rng.integers(2))
        own_inputs = {}
        placed = {}
        for i, owner in lay.input_owner.items():
            if owner != self.j:
                continue
            p = self.positions.get(i)
            if p is None:
                p = int(self.rng.integers(3))
            a = int(self.rng.integers(2))
            own_inputs[i] = {"position": p, "a": a}
            placed[vbqc.primary(i, p)] = i
        qubits = []
        top = lay.template.top_input
        for x in lay.dt.vertices:
            for loc in lay.locations:
                theta = thetas[(x, loc)]
                if lay.location_owner(x, loc) == self.j:
                    qid = lay.qubit(x, loc)
                    if loc == top and x in placed:
                        i = placed[x]
                        state = qsim.zrot(theta) @ np.linalg.matrix_power(qsim.X, own_inputs[i]["a"]) @ self.inputs[i]
                    else:
                        state = qsim.plus_state(theta)
                else:
                    qid = lay.contribution(x, loc, self.j)
                    state = qsim.plus_state(theta)
                world.alloc(self.name, qid, state)
                qubits.append(qid)
        setup = {"call": "setup", "thetas": thetas, "rs": rs, "inputs": own_inputs}
        return [
            Message(self.name, SMPC, "secure", "setup", setup),
            Message(self.name, SERVER, "quantum", "qubits", qubits=qubits),
        ]

    def _maybe_measure(self) -> list[Message]:
        if self._traps is None or not self._expected or not self._expected <= self._held:
            return []
        return [
            Message(self.name, self.name, "local", "measure-trap", {"output": o}, branching=True)
            for o in sorted(self._traps, key=repr)
        ]

    def receive(self, msg: Message, world: World) -> list[Message]:
        lay = self.layout
        if msg.kind == "outputs":
            self._held.update(msg.qubits)
            return self._maybe_measure()
        if msg.kind == "trap-info":
            self._traps = msg.payload["traps"]
            self._expected = {
                x for o, owner in lay.output_owner.items() if owner == self.j for x in lay.dt.primary_sets[o]
            }
            return self._maybe_measure()
        if msg.kind == "measure-trap":
            info = self._traps[msg.payload["output"]]
            x = info["trap"]
            bit = world.measure(self.name, x, qsim.xy_basis(info["delta"]), branchable=True)
            self._trap_outcomes[x] = self.behaviour.trap_report(x, bit)
            if len(self._trap_outcomes) == len(self._traps):
                return [Message(self.name, SMPC, "secure", "trap-outcomes",
                                {"call": "verify", "trap_outcomes": dict(self._trap_outcomes)})]
            return []
        if msg.kind == "verdict":
            if not msg.payload["ok"]:
                self.outcome = "abort"
                self.failed = list(msg.payload["failed"])
                self.halted = True
                return []
            if not self.owns_outputs():
                self.outcome = "ok"
                self.halted = True
                return []
            call = "bits" if lay.output_mode == "classical" else "keys"
            return [Message(self.name, SMPC, "secure", "key-request", {"call": call})]
        if msg.kind == "keys":
            for o, key in msg.payload["keys"].items():
                x = key["qubit"]
                world.require_owner(self.name, [x])
                vbqc.OutputKey(key["rot"], key["kx"], key["kz"]).decrypt(world.store, x)
                self.results[o] = x
            self.outcome = "ok"
            self.halted = True
            return []
        if msg.kind == "bits":
            self.bits = dict(msg.payload["bits"])
            self.outcome = "ok"
            self.halted = True
            return []
        raise ValueError(f"client got unexpected {msg.kind}")


class Server(Party):
    """The server: runs every quantum step it is instructed to run."""

    shared_attrs = ("layout",)

    def __init__(self, layout: Layout, behaviour: ServerBehaviour | None = None) -> None:
        super().__init__(SERVER)
        self.layout = layout
        self.behaviour = behaviour or ServerBehaviour()
        self.view = AdversaryView(layout)
        self.outcome: str | None = None
        self._senders: set[str] = set()
        self._prepared = False
        self._entangled = False
        self._layer: dict | None = None
        self._layer_out: dict[tuple, int] = {}

    def shared_objects(self) -> list[Any]:
        out = self.layout.frozen() + [payload for _, payload in self.view.received]
        out += [v for v in self.view.outcomes.values() if isinstance(v, dict)]
        return out

    def _held(self, world: World) -> HeldQubits:
        return HeldQubits(world, self.name)

    def _recombine(self, world: World) -> list[Message]:
        lay = self.layout
        t_bits: dict[tuple, dict[int, int]] = {}
        for x in lay.dt.vertices:
            for loc in lay.locations:
                owner_q = lay.qubit(x, loc)
                bits = {}
                for j in lay.clients:
                    if j == lay.location_owner(x, loc):
                        continue
                    q = lay.contribution(x, loc, j)
                    world.store.apply(qsim.CNOT, [owner_q, q])
                    bits[j] = world.measure(self.name, q, qsim.Z_BASIS)
                t_bits[(x, loc)] = bits
        return [Message(self.name, SMPC, "auth", "t-bits", {"call": "dbqc", "t_bits": t_bits})]

    def _run_gadgets(self, world: World, deltas: Mapping[tuple, Mapping]) -> list[Message]:
        lay = self.layout
        pattern = lay.template.pattern
        held = self._held(world)
        reports = {}
        for x in lay.dt.vertices:
            world.alloc(self.name, lay.qubit(x, lay.template.output), qsim.PLUS)
            for a, b in pattern.edges:
                world.store.cz_lazy(lay.qubit(x, a), lay.qubit(x, b))
            out = {}
            for v in pattern.measurement_order():
                out[v] = world.measure(self.name, lay.qubit(x, v), qsim.xy_basis(deltas[x][v]))
            self.view.outcomes[x] = dict(out)
            reports[x] = self.behaviour.gadget_report(self.view, x, out)
            self.behaviour.after_gadget(self.view, held, x)
        self.behaviour.after_dbqc(self.view, held)
        return [Message(self.name, SMPC, "auth", "gadget-outcomes", {"call": "layer", "outcomes": reports})]

    def receive(self, msg: Message, world: World) -> list[Message]:
        lay = self.layout
        if msg.channel == "auth":
            self.view.received.append((msg.kind, msg.payload))
        if msg.kind == "qubits":
            self._senders.add(msg.sender)
        elif msg.kind == "prepare":
            self._prepared = True
        elif msg.kind == "gadget-angles":
            return self._run_gadgets(world, msg.payload["deltas"])
        elif msg.kind == "layer-angles":
            held = self._held(world)
            if not self._entangled:
                for a, b in lay.dt.edges:
                    world.store.cz_lazy(a, b)
                self._entangled = True
                self.behaviour.after_entangle(self.view, held)
            self._layer = msg.payload
            self._layer_out = {}
            return [
                Message(self.name, self.name, "local", "measure", {"qubit": x}, branching=True)
                for x in msg.payload["order"]
            ]
        elif msg.kind == "measure":
            x = msg.payload["qubit"]
            self.behaviour.before_measure(self.view, self._held(world), x)
            bit = world.measure(self.name, x, qsim.xy_basis(self._layer["deltas"][x]), branchable=True)
            self.view.outcomes[x] = bit
            self._layer_out[x] = self.behaviour.report(self.view, x, bit)
            if len(self._layer_out) < len(self._layer["order"]):
                return []
            if self._layer["final"]:
                call = "verify" if lay.output_mode == "classical" else "trap-info"
            else:
                call = "layer"
            return [Message(self.name, SMPC, "auth", "layer-outcomes", {"call": call, "outcomes": dict(self._layer_out)})]
        elif msg.kind == "return-outputs":
            by_client: dict[int, list[tuple]] = {}
            for o, j in msg.payload["routes"].items():
                by_client.setdefault(j, []).extend(lay.dt.primary_sets[o])
            every = [x for qs in by_client.values() for x in qs]
            self.behaviour.before_return(self.view, self._held(world), every)
            return [Message(self.name, client_name(j), "quantum", "outputs", qubits=qs) for j, qs in sorted(by_client.items())]
        elif msg.kind == "verdict":
            self.outcome = "ok" if msg.payload["ok"] else "abort"
            self.halted = True
            return []
        else:
            raise ValueError(f"server got unexpected {msg.kind}")
        if self._prepared and len(self._senders) == lay.n_clients:
            self._prepared = False
            return self._recombine(world)
        return []


# -- scenario ------------------------------------------------------------------------


@dataclass
class InputSpec:
    client: int
    state: np.ndarray


@dataclass
class ScenarioConfig:
    """One protocol instance plus how to run it.

    Inputs must be pure single-qubit states, one per base input. Non-input
    locations belong to the last client. ``input_positions`` pins the primary
    position that carries an input; otherwise its owner picks one at random.
    """

    base: mbqc.Pattern
    n_clients: int
    inputs: dict[Vertex, InputSpec]
    outputs: dict[Vertex, int]
    name: str = "scenario"
    output_mode: str = "quantum"
    gadget: str = "hi"
    input_positions: dict[Vertex, int] = field(default_factory=dict)
    server: ServerBehaviour | None = None
    clients: dict[int, ClientBehaviour] = field(default_factory=dict)
    interceptor: Interceptor | None = None
    malicious: list[int] = field(default_factory=list)
    fixed_colouring: vbqc.Colouring | None = None
    mode: str = "sample"
    seed: int = 0
    repetitions: int = 1
    qubit_cap: int = qsim.DEFAULT_QUBIT_CAP

    def layout(self) -> Layout:
        return Layout(
            self.base,
            self.n_clients,
            {v: item.client for v, item in self.inputs.items()},
            dict(self.outputs),
            gadget_name=self.gadget,
            output_mode=self.output_mode,
        )

    def validate(self) -> None:
        if self.mode not in ("sample", "enumerate"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        for j in self.malicious:
            if not 1 <= j <= self.n_clients:
                raise ValueError(f"malicious client {j} out of range")
        self.layout()


def two_line_scenario(
    phi: int = 0,
    n_clients: int = 2,
    state: np.ndarray | None = None,
    **kwargs: Any,
) -> ScenarioConfig:
    """Client 1 holds the input of a two-vertex line, the last client the output."""
    state = qsim.KET0 if state is None else np.asarray(state, dtype=complex)
    return ScenarioConfig(
        base=mbqc.two_line(phi),
        n_clients=n_clients,
        inputs={1: InputSpec(1, state)},
        outputs={2: n_clients},
        name=kwargs.pop("name", f"two-line-phi{phi}-n{n_clients}"),
        **kwargs,
    )


def parallel_lines_scenario(phis: Sequence[int], states: Sequence[np.ndarray] | None = None, **kwargs: Any) -> ScenarioConfig:
    """One two-vertex line per client; client j feeds line j and receives line j+1."""
    n = len(phis)
    states = [qsim.KET0] * n if states is None else list(states)
    vertices, edges, flow, angles = [], [], {}, {}
    inputs, outputs = {}, {}
    for k, phi in enumerate(phis):
        i, o = f"in{k + 1}", f"out{k + 1}"
        vertices += [i, o]
        edges.append((i, o))
        flow[i] = o
        angles[i] = phi % 8
        inputs[i] = InputSpec(k + 1, np.asarray(states[k], dtype=complex))
        outputs[o] = (k + 1) % n + 1
    base = mbqc.Pattern(vertices, edges, [f"in{k + 1}" for k in range(n)], [f"out{k + 1}" for k in range(n)], flow, angles)
    return ScenarioConfig(base=base, n_clients=n, inputs=inputs, outputs=outputs,
                          name=kwargs.pop("name", f"parallel-lines-n{n}"), **kwargs)


# -- ideal resources ----------------------------------------------------------------


@dataclass
class IdealOutcome:
    aborted: bool
    state: np.ndarray | None = None
    delivery: list[int] = field(default_factory=list)
    leakage: dict[str, int] | None = None


def leakage(pattern: mbqc.Pattern) -> dict[str, int]:
    """Permitted leak: an upper bound on circuit size and the input length."""
    return {"size_bound": len(pattern.vertices), "input_length": len(pattern.inputs)}


def ideal_mpqc(
    inputs: Mapping[Vertex, np.ndarray],
    pattern: mbqc.Pattern,
    abort_bits: Mapping[int, int] | None = None,
    malicious: Sequence[int] = (),
    n_clients: int | None = None,
) -> IdealOutcome:
    """Trusted party: applies the pattern's map to the joint input.

    Any abort bit set aborts for everyone. Malicious clients are listed first
    in the delivery order.
    """
    if any(int(b) for b in (abort_bits or {}).values()):
        return IdealOutcome(True)
    vec = np.ones(1, dtype=complex)
    for i in pattern.inputs:
        vec = np.kron(vec, np.asarray(inputs[i], dtype=complex))
    out = mbqc.pattern_operator(pattern) @ vec
    out = out / np.linalg.norm(out)
    n = n_clients if n_clients is not None else max(list(malicious) + [0])
    order = list(malicious) + [j for j in range(1, n + 1) if j not in malicious]
    return IdealOutcome(False, out, order)


def ideal_vdqc(input_state: np.ndarray, pattern: mbqc.Pattern, e: int = 0, c: int = 0) -> IdealOutcome:
    """Single-client verifiable delegation resource with optional leakage."""
    leak = leakage(pattern) if e else None
    if c:
        return IdealOutcome(True, leakage=leak)
    res = ideal_mpqc({pattern.inputs[0]: input_state} if pattern.inputs else {}, pattern)
    res.leakage = leak
    return res


def x_basis_distribution(state: np.ndarray) -> dict[tuple[int, ...], float]:
    """Joint distribution of X-basis outcomes (0 for |+>) of a pure state."""
    n = int(np.log2(state.size))
    hn = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        hn = np.kron(hn, qsim.H)
    amps = hn @ state
    return {tuple((k >> (n - 1 - b)) & 1 for b in range(n)): float(abs(amps[k]) ** 2) for k in range(2**n)}


# -- running ---------------------------------------------------------------------------


@dataclass
class RunReport:
    """Outcome of one run. Fidelity fields are None when the run aborted."""

    scenario: str
    seed: int
    mode: str
    output_mode: str
    accepted: bool
    accept_probability: float
    leaves: int
    min_fidelity: float | None
    mean_fidelity: float | None
    client_fidelity: dict[int, float] | None
    bit_distribution: dict[str, float] | None
    ideal_bit_distribution: dict[str, float] | None
    failed_traps: list[str]
    abort_reason: str | None
    quantum_rounds: dict[int, int]
    smpc_calls: int
    smpc_call_names: list[str]
    layers: int
    transcript_digest: str
    peak_register: int
    seconds: float

    FIELDS = (
        "scenario", "seed", "mode", "output_mode", "accepted", "accept_probability", "leaves",
        "min_fidelity", "mean_fidelity", "client_fidelity", "bit_distribution", "ideal_bit_distribution",
        "failed_traps", "abort_reason", "quantum_rounds", "smpc_calls", "smpc_call_names", "layers",
        "transcript_digest", "peak_register", "seconds",
    )

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for k in self.FIELDS:
            v = getattr(self, k)
            if isinstance(v, dict):
                v = {str(a): b for a, b in v.items()}
            out[k] = v
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RunReport:
        d = dict(d)
        for k in ("client_fidelity", "quantum_rounds"):
            if d.get(k) is not None:
                d[k] = {int(a): b for a, b in d[k].items()}
        return cls(**{k: d[k] for k in cls.FIELDS})

    def digest(self) -> str:
        """Hash of everything except wall-clock time."""
        body = {k: v for k, v in self.to_dict().items() if k != "seconds"}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def build_world(config: ScenarioConfig, enumerate_branches: bool = False) -> World:
    config.validate()
    layout = config.layout()
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_clients + 1)
    smpc = SmpcFunctionality(layout, np.random.default_rng(seeds[0]), config.fixed_colouring, config.malicious)
    clients = []
    for j in layout.clients:
        own = {v: item.state for v, item in config.inputs.items() if item.client == j}
        pos = {v: p for v, p in config.input_positions.items() if v in own}
        clients.append(Client(j, layout, own, np.random.default_rng(seeds[j]), pos, config.clients.get(j)))
    server = Server(layout, config.server)
    return World(clients + [server, smpc], config.seed, config.qubit_cap, config.interceptor, enumerate_branches)


def ideal_output(config: ScenarioConfig) -> np.ndarray:
    layout = config.layout()
    eff = vbqc.computation_pattern(layout.base, layout.bridged)
    return ideal_mpqc({v: s.state for v, s in config.inputs.items()}, eff).state


def _leaf_summary(world: World, layout: Layout, ideal: np.ndarray) -> dict[str, Any]:
    clients = [p for p in world.parties.values() if isinstance(p, Client)]
    aborted = world.aborted is not None or any(c.outcome == "abort" for c in clients)
    failed = sorted({repr(x) for c in clients for x in c.failed})
    summary: dict[str, Any] = {"accepted": not aborted, "failed": failed, "reason": world.aborted}
    if aborted:
        if not failed and world.aborted is None:
            summary["reason"] = "trap check failed"
        return summary
    outs = list(layout.base.outputs)
    if layout.output_mode == "quantum":
        by_output = {o: c.results[o] for c in clients for o in c.results}
        rho = world.store.density([by_output[o] for o in outs])
        summary["fidelity"] = qsim.fidelity(ideal, rho)
        per = {}
        target = np.outer(ideal, ideal.conj())
        for c in clients:
            mine = [k for k, o in enumerate(outs) if layout.output_owner[o] == c.j]
            if mine:
                per[c.j] = qsim.mixed_fidelity(
                    qsim.partial_trace(target, len(outs), mine), qsim.partial_trace(rho, len(outs), mine)
                )
        summary["client_fidelity"] = per
    else:
        bits = {o: b for c in clients for o, b in c.bits.items()}
        summary["bits"] = "".join(str(bits[o]) for o in outs)
    return summary


def run_dmpqc(config: ScenarioConfig) -> RunReport:
    """Run one scenario (sample or enumerate) and compare with the ideal resource."""
    start = time.perf_counter()
    enumerate_branches = config.mode == "enumerate"
    world = build_world(config, enumerate_branches)
    layout = world.parties[SMPC].layout
    ideal = ideal_output(config)
    summaries: list[tuple[float, dict]] = []
    digests: list[str] = []
    audit: dict[str, Any] = {}

    def on_leaf(w: World) -> None:
        s = _leaf_summary(w, layout, ideal)
        summaries.append((w.probability, s))
        digests.append(w.transcript.digest())
        if not audit:
            smpc = w.parties[SMPC]
            audit["calls"] = list(smpc.calls)
            audit["layers"] = len(smpc.state.get("layers")) if smpc.state.has("layers") else 0
            audit["rounds"] = {j: w.transcript.quantum_rounds(client_name(j)) for j in layout.clients}
            audit["peak"] = w.store.peak

    run_world(world, on_leaf)
    accepted = [(p, s) for p, s in summaries if s["accepted"]]
    p_acc = float(sum(p for p, _ in accepted))
    failed = sorted({f for _, s in summaries for f in s["failed"]})
    reasons = sorted({s["reason"] for _, s in summaries if s.get("reason")})
    fid_min = fid_mean = None
    client_fid = bitdist = ideal_bits = None
    if accepted and layout.output_mode == "quantum":
        fid_min = min(s["fidelity"] for _, s in accepted)
        fid_mean = sum(p * s["fidelity"] for p, s in accepted) / p_acc if p_acc > 0 else None
        client_fid = {}
        for _, s in accepted:
            for j, f in s["client_fidelity"].items():
                client_fid[j] = min(client_fid.get(j, 1.0), f)
    if layout.output_mode == "classical":
        ideal_bits = {"".join(map(str, k)): v for k, v in x_basis_distribution(ideal).items()}
        if accepted:
            bitdist = {k: 0.0 for k in ideal_bits}
            for p, s in accepted:
                bitdist[s["bits"]] += p / p_acc if p_acc > 0 else 0.0
    if len(digests) == 1:
        digest = digests[0]
    else:
        digest = hashlib.sha256("\n".join(digests).encode()).hexdigest()
    calls = audit.get("calls", [])
    return RunReport(
        scenario=config.name,
        seed=config.seed,
        mode=config.mode,
        output_mode=layout.output_mode,
        accepted=bool(accepted) and all(s["accepted"] for _, s in summaries),
        accept_probability=p_acc,
        leaves=len(summaries),
        min_fidelity=fid_min,
        mean_fidelity=fid_mean,
        client_fidelity=client_fid,
        bit_distribution=bitdist,
        ideal_bit_distribution=ideal_bits,
        failed_traps=failed,
        abort_reason=reasons[0] if reasons else None,
        quantum_rounds=audit.get("rounds", {}),
        smpc_calls=len(calls),
        smpc_call_names=calls,
        layers=audit.get("layers", 0),
        transcript_digest=digest,
        peak_register=audit.get("peak", 0),
        seconds=time.perf_counter() - start,
    )
