"""Trusted classical multi-party resource driving the distributed protocol.

`SmpcFunctionality` is an in-process ideal functionality. It never runs a real
secret-sharing scheme; it receives every party's private inputs over secure
channels, keeps state between calls and answers with the minimum each party
needs. One *call* is one evaluation, fired as soon as all of its inputs have
arrived. The phases are:

1. ``setup``: collect client secrets, choose the trap colouring and the
   gadget choice for every dotted-triple vertex.
2. ``dbqc``: absorb the server's CNOT bits and send every gadget angle in one
   batch.
3. ``layer``: one call per measurement layer of the verifiable phase; the
   first consumes the gadget outcomes and turns them into verification keys.
4. key release: ``trap-info``, ``verify``, ``keys`` for quantum outputs, or
   ``verify``, ``bits`` for classical outputs.

Keys and decoded bits are only ever sent by the last call, after every trap
has passed.
"""

from __future__ import annotations

from collections.abc import Hashable, Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import angles as ang
from . import dbqc, mbqc, vbqc
from .net import Message, Party, ProtocolAbort, World

Vertex = Hashable
SMPC = "smpc"
SERVER = "server"


def client_name(j: int) -> str:
    return f"client{j}"


class SmpcError(RuntimeError):
    """Malformed or out-of-order use of the SMPC resource."""


# -- public layout -------------------------------------------------------------


@dataclass
class Layout:
    """Everything every party knows before the run starts.

    Who owns each gadget location: the top input of every dotted-triple
    vertex in an input's primary set belongs to that input's client; every
    other location belongs to the last client.
    """

    base: mbqc.Pattern
    n_clients: int
    input_owner: dict[Vertex, int]
    output_owner: dict[Vertex, int]
    gadget_name: str = "hi"
    output_mode: str = "quantum"
    bridged: list[tuple] | None = None
    dt: vbqc.DTGraph = field(init=False)
    template: dbqc.Gadget = field(init=False)

    def frozen(self) -> list[Any]:
        """Objects never mutated after construction (shared by snapshots)."""
        return [self, self.base, self.dt, self.template, self.input_owner, self.output_owner, self.bridged]

    def __post_init__(self) -> None:
        if self.n_clients < 1:
            raise ValueError("need at least one client")
        if self.output_mode not in ("quantum", "classical"):
            raise ValueError(f"unknown output mode {self.output_mode!r}")
        if self.gadget_name not in dbqc.GADGETS:
            raise ValueError(f"unknown gadget {self.gadget_name!r}")
        for i in self.base.inputs:
            if len(self.base.neighbours(i)) != 1:
                raise ValueError(f"input {i!r} must have degree 1")
        for mapping in (self.input_owner, self.output_owner):
            for v, j in mapping.items():
                if not 1 <= j <= self.n_clients:
                    raise ValueError(f"owner {j} of {v!r} is not a client")
        if set(self.input_owner) != set(self.base.inputs):
            raise ValueError("every input needs exactly one owner")
        if set(self.output_owner) != set(self.base.outputs):
            raise ValueError("every output needs exactly one owner")
        self.dt = vbqc.build_dtg(self.base.vertices, self.base.edges)
        self.template = dbqc.GADGETS[self.gadget_name](False)
        if self.bridged is None:
            self.bridged = vbqc.default_bridges(self.base)

    @property
    def clients(self) -> list[int]:
        return list(range(1, self.n_clients + 1))

    @property
    def locations(self) -> list[Vertex]:
        return self.template.locations

    def location_owner(self, x: tuple, loc: Vertex) -> int:
        if loc == self.template.top_input and x[0] == "p" and x[1] in self.input_owner:
            return self.input_owner[x[1]]
        return self.n_clients

    def qubit(self, x: tuple, loc: Vertex) -> tuple:
        """Physical id of a gadget location; the kept output is the DT vertex."""
        return x if loc == self.template.output else (x, loc)

    def contribution(self, x: tuple, loc: Vertex, j: int) -> tuple:
        return (x, loc, j)

    def output_clients(self) -> list[int]:
        return sorted(set(self.output_owner.values()))


# -- state ----------------------------------------------------------------------


class SmpcState:
    """Write-once record of what the SMPC has learned and decided."""

    FIELDS = (
        "submissions", "colouring", "gadget_choice", "plans", "vbqc_secrets",
        "session", "layers", "trap_outcomes", "verdict",
    )

    def __init__(self) -> None:
        self._values: dict[str, Any] = {}

    def set(self, name: str, value: Any) -> None:
        if name not in self.FIELDS:
            raise KeyError(name)
        if name in self._values:
            raise SmpcError(f"{name} already set")
        self._values[name] = value

    def frozen(self) -> list[Any]:
        """Values that are complete once set; the session is the mutable exception."""
        out = [v for k, v in self._values.items() if k not in ("session", "trap_outcomes", "verdict")]
        if "session" in self._values:
            sess = self._values["session"]
            out += [sess.base, sess.dt, sess.colouring, sess.secrets, sess.eff, sess.comp_of,
                    sess.bridge_middles, sess.eff_pads, sess.roles, sess.bridged]
        return out

    def get(self, name: str) -> Any:
        if name not in self._values:
            raise SmpcError(f"{name} not available yet")
        return self._values[name]

    def has(self, name: str) -> bool:
        return name in self._values


@dataclass
class OutputRelease:
    """What one client receives at the end: its keys, or abort."""

    client: int
    abort: bool
    keys: dict[Vertex, dict[str, Any]] = field(default_factory=dict)
    bits: dict[Vertex, int] = field(default_factory=dict)


# -- the functionality ------------------------------------------------------------


class SmpcFunctionality(Party):
    """Ideal classical SMPC for the distributed verifiable protocol.

    ``fixed_colouring`` pins the trap colouring instead of sampling it; it
    exists for exhaustive tests over colourings and is off in normal runs.
    ``release_order`` lists clients that receive their output first.
    """

    shared_attrs = ("layout",)

    def __init__(
        self,
        layout: Layout,
        rng: np.random.Generator,
        fixed_colouring: vbqc.Colouring | None = None,
        release_order: list[int] | None = None,
    ) -> None:
        super().__init__(SMPC)
        self.layout = layout
        self.rng = rng
        self.fixed_colouring = fixed_colouring
        self.release_order = list(release_order or [])
        self.state = SmpcState()
        self.calls: list[str] = []
        self._pending: dict[str, dict[str, dict]] = {}
        self._layer_index = 0
        self._reports: dict[tuple, int] = {}
        self._key_requests: set[int] = set()

    def shared_objects(self) -> list[Any]:
        return self.layout.frozen() + self.state.frozen()

    # -- plumbing ---------------------------------------------------------------------

    def _contributors(self, call: str) -> set[str]:
        lay = self.layout
        if call == "setup":
            return {client_name(j) for j in lay.clients}
        if call in ("dbqc", "layer", "trap-info"):
            return {SERVER}
        if call == "verify":
            if lay.output_mode == "quantum":
                return {client_name(j) for j in lay.output_clients()}
            return {SERVER}
        if call in ("keys", "bits"):
            return {client_name(j) for j in lay.output_clients()}
        raise SmpcError(f"unknown call {call!r}")

    def receive(self, msg: Message, world: World) -> list[Message]:
        call = msg.payload.get("call")
        if call is None:
            raise SmpcError(f"message {msg.kind} is not an SMPC call")
        buf = self._pending.setdefault(call, {})
        if msg.sender in buf:
            raise ProtocolAbort(f"duplicate submission from {msg.sender} to {call}")
        buf[msg.sender] = msg.payload
        if set(buf) != self._contributors(call):
            return []
        del self._pending[call]
        self.calls.append(call)
        handler = {
            "setup": self._on_setup,
            "dbqc": self._on_dbqc,
            "layer": self._on_layer,
            "trap-info": self._on_trap_info,
            "verify": self._on_verify,
            "keys": self._on_release,
            "bits": self._on_release,
        }[call]
        return handler(buf)

    def _to_server(self, kind: str, payload: dict) -> Message:
        return Message(SMPC, SERVER, "auth", kind, payload)

    def _to_client(self, j: int, kind: str, payload: dict) -> Message:
        return Message(SMPC, client_name(j), "secure", kind, payload)

    # -- phase 1 -------------------------------------------------------------------

    def init(self, submissions: Mapping[int, Mapping[str, Any]]) -> None:
        """Store client secrets, choose colouring and gadget choices."""
        lay = self.layout
        if set(submissions) != set(lay.clients):
            raise SmpcError("one submission per client required")
        positions = {}
        for j, sub in submissions.items():
            for i, info in sub.get("inputs", {}).items():
                if lay.input_owner.get(i) != j:
                    raise SmpcError(f"client {j} does not own input {i!r}")
                if info["position"] not in (0, 1, 2):
                    raise SmpcError("input position must be 0, 1 or 2")
                positions[i] = info["position"]
        if set(positions) != set(lay.base.inputs):
            raise SmpcError("missing input position")
        if self.fixed_colouring is not None:
            col = self.fixed_colouring
            for i, p in positions.items():
                if col.computation_position(i) != p:
                    raise SmpcError("fixed colouring contradicts an input position")
        else:
            col = vbqc.sample_colouring(lay.dt, self.rng, positions)
        choice = {x: col.role(x) == vbqc.DUMMY for x in lay.dt.vertices}
        self.state.set("submissions", dict(submissions))
        self.state.set("colouring", col)
        self.state.set("gadget_choice", choice)

    def _on_setup(self, buf: dict[str, dict]) -> list[Message]:
        subs = {int(name.removeprefix("client")): payload for name, payload in buf.items()}
        self.init(subs)
        return [self._to_server("prepare", {"locations": len(self.layout.locations)})]

    # -- phase 2 ---------------------------------------------------------------------

    def orchestrate_dbqc(self, t_bits: Mapping[tuple, Mapping[int, int]]) -> dict[tuple, dict[Vertex, int]]:
        """Recombine pads, pick the hidden top-input encryption, return all angles."""
        if not self.state.has("colouring"):
            raise SmpcError("dbqc requested before setup")
        lay = self.layout
        subs = self.state.get("submissions")
        col = self.state.get("colouring")
        choice = self.state.get("gadget_choice")
        input_comp = {col.computation_vertex(lay.dt, ("p", i)): i for i in lay.base.inputs}
        top = lay.template.top_input
        plans: dict[tuple, dbqc.GadgetPlan] = {}
        hidden: dict[tuple, dict[str, int]] = {}
        deltas: dict[tuple, dict[Vertex, int]] = {}
        for x in lay.dt.vertices:
            gadget = dbqc.GADGETS[lay.gadget_name](choice[x])
            secrets = {}
            thetas = {}
            for loc in lay.locations:
                owner = lay.location_owner(x, loc)
                ls = dbqc.LocationSecrets(
                    owner,
                    {j: subs[j]["thetas"][(x, loc)] for j in lay.clients},
                    {j: subs[j]["rs"][(x, loc)] for j in lay.clients},
                )
                secrets[loc] = ls
                thetas[loc] = dbqc.combine(ls, t_bits.get((x, loc), {}))
            pads = {v: 0 for v in gadget.pattern.inputs}
            info: dict[str, int] = {}
            if not choice[x]:
                info["theta_prime"] = int(self.rng.integers(8))
                thetas[top] = (thetas[top] - info["theta_prime"]) % 8
                if x in input_comp:
                    i = input_comp[x]
                    owner = lay.input_owner[i]
                    info["a_prime"] = int(self.rng.integers(2))
                    info["a_client"] = subs[owner]["inputs"][i]["a"]
                    pads[top] = info["a_client"] ^ info["a_prime"]
            plan = dbqc.GadgetPlan(gadget, secrets, pads, thetas)
            deltas[x] = plan.one_shot_deltas()
            plans[x] = plan
            hidden[x] = info
        self.state.set("plans", (plans, hidden))
        return deltas

    def _on_dbqc(self, buf: dict[str, dict]) -> list[Message]:
        deltas = self.orchestrate_dbqc(buf[SERVER]["t_bits"])
        return [self._to_server("gadget-angles", {"deltas": deltas})]

    # -- phase 3 -----------------------------------------------------------------------

    def vbqc_secrets(self, gadget_outcomes: Mapping[tuple, Mapping[Vertex, int]]) -> vbqc.VbqcSecrets:
        """Turn each gadget's residual key into the verifiable-phase secrets.

        A dummy ends in X^kx |0>, so d = kx. A trap or computation qubit ends
        in X^kx Z^kz |+_theta'>, a |+> state at the flipped angle. The input
        qubit ends in X^kx Z^kz Z(gamma) X^a' rho, which is Z(angle) X^(a'+kx) rho.
        """
        lay = self.layout
        plans, hidden = self.state.get("plans")
        col = self.state.get("colouring")
        theta, r, d, a, dummy_angle = {}, {}, {}, {}, {}
        for x in lay.dt.vertices:
            kx, kz = plans[x].output_key(gadget_outcomes[x])
            info = hidden[x]
            if col.role(x) == vbqc.DUMMY:
                d[x] = kx
                dummy_angle[x] = int(self.rng.integers(8))
                continue
            r[x] = int(self.rng.integers(2))
            if "a_prime" in info:
                sign = -1 if (info["a_client"] ^ info["a_prime"]) else 1
                gamma = (sign * info["theta_prime"]) % 8
                theta[x] = ang.flipped_plus_angle(gamma, kx, kz)
                a[x] = info["a_prime"] ^ kx
            else:
                theta[x] = ang.flipped_plus_angle(info["theta_prime"], kx, kz)
        return vbqc.VbqcSecrets(theta, r, d, a, dummy_angle)

    def _start_vbqc(self, gadget_outcomes) -> None:
        lay = self.layout
        secrets = self.vbqc_secrets(gadget_outcomes)
        col = self.state.get("colouring")
        session = vbqc.VbqcSession(lay.base, lay.dt, col, secrets, lay.bridged)
        layers = vbqc.schedule(lay.dt, session.eff, session.bridged, self.rng)
        if lay.output_mode == "classical":
            out = [x for o in lay.base.outputs for x in lay.dt.primary_sets[o]]
            layers.append([out[i] for i in self.rng.permutation(len(out))])
        self.state.set("vbqc_secrets", secrets)
        self.state.set("session", session)
        self.state.set("layers", layers)

    def vbqc_instruction(self, x: tuple) -> int:
        """Measurement angle for DT vertex x given everything reported so far."""
        session: vbqc.VbqcSession = self.state.get("session")
        return session.delta(x)

    def _record_layer(self, outcomes: Mapping[tuple, int]) -> None:
        session: vbqc.VbqcSession = self.state.get("session")
        expected = self.state.get("layers")[self._layer_index - 1]
        if set(outcomes) != set(expected):
            raise ProtocolAbort("layer report does not match the instructed qubits")
        # record in instruction order so bridge updates land before their users
        for x in expected:
            bit = int(outcomes[x])
            self._reports[x] = bit
            session.record(x, bit)

    def _on_layer(self, buf: dict[str, dict]) -> list[Message]:
        payload = buf[SERVER]
        if self._layer_index == 0:
            self._start_vbqc(payload["outcomes"])
        else:
            self._record_layer(payload["outcomes"])
        layers = self.state.get("layers")
        layer = layers[self._layer_index]
        self._layer_index += 1
        deltas = {x: self.vbqc_instruction(x) for x in layer}
        final = self._layer_index == len(layers)
        return [self._to_server("layer-angles", {"order": layer, "deltas": deltas, "final": final})]

    # -- key release --------------------------------------------------------------------

    def _on_trap_info(self, buf: dict[str, dict]) -> list[Message]:
        self._record_layer(buf[SERVER]["outcomes"])
        session: vbqc.VbqcSession = self.state.get("session")
        lay = self.layout
        out: list[Message] = []
        routes = {}
        per_client: dict[int, dict] = {}
        for o in lay.base.outputs:
            j = lay.output_owner[o]
            routes[o] = j
            trap = next(x for x in lay.dt.primary_sets[o] if session.role(x) == vbqc.TRAP)
            per_client.setdefault(j, {})[o] = {"trap": trap, "delta": session.delta(trap)}
        out.append(self._to_server("return-outputs", {"routes": routes}))
        for j in sorted(per_client):
            out.append(self._to_client(j, "trap-info", {"traps": per_client[j]}))
        return out

    def check_traps(self, client_outcomes: Mapping[tuple, int]) -> list[tuple]:
        """Failed traps among server-reported and client-reported outcomes."""
        session: vbqc.VbqcSession = self.state.get("session")
        every = {**self._reports, **dict(client_outcomes)}
        return [x for x, b in every.items() if session.role(x) == vbqc.TRAP and not session.trap_ok(x, b)]

    def _on_verify(self, buf: dict[str, dict]) -> list[Message]:
        client_outcomes: dict[tuple, int] = {}
        if self.layout.output_mode == "classical":
            self._record_layer(buf[SERVER]["outcomes"])
        else:
            for payload in buf.values():
                client_outcomes.update(payload["trap_outcomes"])
        self.state.set("trap_outcomes", client_outcomes)
        failed = self.check_traps(client_outcomes)
        verdict = {"ok": not failed, "failed": failed}
        self.state.set("verdict", verdict)
        out = [self._to_server("verdict", verdict)]
        out += [self._to_client(j, "verdict", verdict) for j in self.layout.clients]
        if failed:
            self.halted = True
        return out

    def key_release(self) -> list[OutputRelease]:
        """Per-client releases, honouring ``release_order`` first."""
        verdict = self.state.get("verdict")
        lay = self.layout
        session: vbqc.VbqcSession = self.state.get("session")
        order = [j for j in self.release_order if j in lay.output_clients()]
        order += [j for j in lay.output_clients() if j not in order]
        releases = []
        for j in order:
            if not verdict["ok"]:
                releases.append(OutputRelease(j, True))
                continue
            rel = OutputRelease(j, False)
            for o, owner in lay.output_owner.items():
                if owner != j:
                    continue
                x = session.colouring.computation_vertex(lay.dt, ("p", o))
                if lay.output_mode == "classical":
                    rel.bits[o] = session.s[o]
                else:
                    key = session.output_key(o)
                    rel.keys[o] = {"qubit": x, "rot": key.rot, "kx": key.kx, "kz": key.kz}
            releases.append(rel)
        return releases

    def _on_release(self, buf: dict[str, dict]) -> list[Message]:
        out = []
        for rel in self.key_release():
            if self.layout.output_mode == "classical":
                out.append(self._to_client(rel.client, "bits", {"bits": rel.bits}))
            else:
                out.append(self._to_client(rel.client, "keys", {"keys": rel.keys}))
        self.halted = True
        return out
