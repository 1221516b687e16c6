"""Deterministic message passing between protocol parties.

Parties exchange `Message` objects over four kinds of channel:

- ``auth``: authenticated classical; an eavesdropper reads the content.
- ``secure``: authenticated and private; an eavesdropper learns the length.
- ``quantum``: insecure quantum; an interceptor may act on the qubits.
- ``local``: a party's note to itself, used to split long tasks into events.

Delivery is round-robin over parties in a fixed order, one message per event.
Quantum payloads carry qubit ids; the amplitudes stay in a single shared
`QuantumStore` and only ownership moves, so nothing can be copied.

`run_world` drives a world to completion either by sampling every
measurement or, in enumeration mode, by exploring both outcomes of every
branchable measurement. A branchable measurement must be the only one in its
event; the driver snapshots the world before each event and replays it with
the other outcome.
"""

from __future__ import annotations

import copy
import hashlib
import json
from collections import deque
from collections.abc import Hashable, Iterable
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import qsim

CHANNELS = ("auth", "secure", "quantum", "local")


class DeadlockError(RuntimeError):
    """No message in flight while some party is still waiting."""


class ProtocolAbort(Exception):
    """Raised inside a party to end the run with an abort."""


_ATOMIC = (str, int, float, bool, complex, bytes, type(None), tuple, frozenset, range)


def fast_copy(obj: Any, memo: dict[int, Any]) -> Any:
    """Deep copy that treats tuples and scalars as immutable.

    Qubit ids and most dictionary keys here are tuples of scalars, and
    walking them dominates `copy.deepcopy`. Tuples holding mutable objects
    must therefore be registered in ``memo`` (or avoided) by the caller.
    """
    if isinstance(obj, _ATOMIC):
        return obj
    found = memo.get(id(obj))
    if found is not None:
        return found
    if type(obj) is dict:
        out: Any = {}
        memo[id(obj)] = out
        for k, v in obj.items():
            out[k] = fast_copy(v, memo)
    elif type(obj) is list:
        out = []
        memo[id(obj)] = out
        out.extend(fast_copy(v, memo) for v in obj)
    elif type(obj) is set:
        out = set(obj)
        memo[id(obj)] = out
    elif type(obj) is deque:
        out = deque(fast_copy(v, memo) for v in obj)
        memo[id(obj)] = out
    elif isinstance(obj, np.ndarray):
        out = obj.copy()
        memo[id(obj)] = out
    elif isinstance(obj, np.random.Generator):
        bg = type(obj.bit_generator)()
        bg.state = obj.bit_generator.state
        out = np.random.Generator(bg)
        memo[id(obj)] = out
    elif hasattr(obj, "__deepcopy__") or not hasattr(obj, "__dict__"):
        out = copy.deepcopy(obj, memo)
    else:
        out = object.__new__(type(obj))
        memo[id(obj)] = out
        out.__dict__.update(fast_copy(obj.__dict__, memo))
    return out


@dataclass
class Message:
    sender: str
    receiver: str
    channel: str
    kind: str
    payload: dict[str, Any] = field(default_factory=dict)
    qubits: list[Hashable] = field(default_factory=list)
    branching: bool = False

    def __post_init__(self) -> None:
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")


def _canon(obj: Any) -> Any:
    """JSON-stable form: tuples to lists, mapping keys to sorted strings."""
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return repr(obj)


class Transcript:
    """Append-only log of delivered messages with a stable serialisation."""

    FIELDS = ("seq", "sender", "receiver", "channel", "kind", "payload", "qubits")

    def __init__(self) -> None:
        self.entries: list[dict[str, Any]] = []
        self._lines: list[str] = []

    def record(self, msg: Message) -> None:
        entry = {
            "seq": len(self.entries),
            "sender": msg.sender,
            "receiver": msg.receiver,
            "channel": msg.channel,
            "kind": msg.kind,
            "payload": _canon(msg.payload),
            "qubits": [repr(q) for q in msg.qubits],
        }
        self.entries.append(entry)
        self._lines.append(json.dumps(entry, separators=(",", ":")))

    def truncate(self, n: int) -> None:
        del self.entries[n:]
        del self._lines[n:]

    def lines(self) -> list[str]:
        return list(self._lines)

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self._lines:
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    def quantum_rounds(self, party: str) -> int:
        """Number of maximal same-direction runs of quantum traffic for a party."""
        rounds = 0
        last = None
        for e in self.entries:
            if e["channel"] != "quantum" or party not in (e["sender"], e["receiver"]):
                continue
            direction = "send" if e["sender"] == party else "recv"
            if direction != last:
                rounds += 1
                last = direction
        return rounds

    def count(self, kind: str | None = None, channel: str | None = None) -> int:
        return sum(
            1 for e in self.entries
            if (kind is None or e["kind"] == kind) and (channel is None or e["channel"] == channel)
        )


class Party:
    """Base class. Subclasses implement `start` and `receive`.

    Attributes named in ``shared_attrs`` are treated as read-only after
    setup and are shared, not copied, between enumeration snapshots.
    """

    shared_attrs: tuple[str, ...] = ()

    def __init__(self, name: str) -> None:
        self.name = name
        self.halted = False

    def start(self, world: World) -> list[Message]:
        return []

    def receive(self, msg: Message, world: World) -> list[Message]:
        raise NotImplementedError

    def shared_objects(self) -> list[Any]:
        return [getattr(self, a) for a in self.shared_attrs if hasattr(self, a)]


class QuantumAccess:
    """What an eavesdropper may do to qubits in transit: act on them or swap them."""

    def __init__(self, world: World, qubits: Iterable[Hashable]) -> None:
        self._world = world
        self.qubits = list(qubits)

    def _check(self, qid: Hashable) -> None:
        if qid not in self.qubits:
            raise PermissionError(f"qubit {qid!r} is not in transit")

    def apply(self, matrix: np.ndarray, qid: Hashable) -> None:
        self._check(qid)
        self._world.store.apply(matrix, [qid])

    def substitute(self, qid: Hashable, state: np.ndarray) -> None:
        """Keep the original and forward a fresh qubit in ``state`` instead."""
        self._check(qid)
        store = self._world.store
        kept = ("intercepted", qid, len(self._world.intercepted))
        store.rename(qid, kept)
        self._world.intercepted.append(kept)
        store.alloc(qid, state)


class Interceptor:
    """Eavesdropper hooks; the default lets everything through.

    Authenticated messages are shown in full, secure ones only by length.
    Returning False from either classical hook blocks the message, which the
    receiver sees as an abort.
    """

    def observe_authenticated(self, msg: Message) -> bool:
        return True

    def observe_secure(self, sender: str, receiver: str, length: int) -> bool:
        return True

    def on_quantum(self, sender: str, receiver: str, access: QuantumAccess) -> None:
        return None


@dataclass
class BranchPoint:
    chosen: int
    p_chosen: float
    alternative: int
    p_alternative: float


class World:
    """Parties, shared quantum store, transcript and randomness of one run."""

    def __init__(
        self,
        parties: Iterable[Party],
        seed: int,
        cap: int = qsim.DEFAULT_QUBIT_CAP,
        interceptor: Interceptor | None = None,
        enumerate_branches: bool = False,
    ) -> None:
        self.parties: dict[str, Party] = {}
        for p in parties:
            if p.name in self.parties:
                raise ValueError(f"duplicate party {p.name!r}")
            self.parties[p.name] = p
        self.store = qsim.QuantumStore(cap)
        self.nature = np.random.default_rng(np.random.SeedSequence([seed, 0xC0FFEE]))
        self.transcript = Transcript()
        self.inbox: dict[str, deque[Message]] = {n: deque() for n in self.parties}
        self.interceptor = interceptor or Interceptor()
        self.enumerate_branches = enumerate_branches
        self.owner: dict[Hashable, str] = {}
        self.intercepted: list[Hashable] = []
        self.aborted: str | None = None
        self._cursor = 0
        self._started = False
        self._forced: int | None = None
        self._branch: BranchPoint | None = None
        self._in_branching_event = False
        self.probability = 1.0
        self.events = 0

    # -- quantum bookkeeping ---------------------------------------------------

    def alloc(self, party: str, qid: Hashable, state) -> None:
        self.store.alloc(qid, state)
        self.owner[qid] = party

    def require_owner(self, party: str, qids: Iterable[Hashable]) -> None:
        for q in qids:
            if self.owner.get(q) != party:
                raise PermissionError(f"{party} does not hold qubit {q!r}")

    def measure(self, party: str, qid: Hashable, basis: np.ndarray, branchable: bool = False) -> int:
        """Measure a qubit held by ``party``; enumerable when ``branchable``."""
        self.require_owner(party, [qid])
        if branchable and self.enumerate_branches:
            bit, _ = self.store.measure(qid, basis, chooser=self._choose)
        else:
            bit, _ = self.store.measure(qid, basis, rng=self.nature)
        del self.owner[qid]
        return bit

    def _choose(self, qid, p0: float, p1: float) -> int:
        if not self._in_branching_event:
            raise RuntimeError("branchable measurement outside a branching event")
        if self._branch is not None:
            raise RuntimeError("two branchable measurements in one event")
        if self._forced is not None:
            bit = self._forced
            self._forced = None
            self._branch = BranchPoint(bit, p1 if bit else p0, 1 - bit, 0.0)
            return bit
        bit = 0 if p0 >= qsim.DEGENERATE_BRANCH else 1
        chosen, other = (p0, p1) if bit == 0 else (p1, p0)
        self._branch = BranchPoint(bit, chosen, 1 - bit, other)
        return bit

    # -- delivery ----------------------------------------------------------------

    def post(self, msgs: Iterable[Message]) -> None:
        for m in msgs:
            if m.receiver not in self.parties:
                raise KeyError(f"unknown receiver {m.receiver!r}")
            if m.channel == "quantum":
                self.require_owner(m.sender, m.qubits)
                self.interceptor.on_quantum(m.sender, m.receiver, QuantumAccess(self, m.qubits))
                for q in m.qubits:
                    self.owner[q] = m.receiver
            elif m.channel == "auth":
                if not self.interceptor.observe_authenticated(m):
                    self.aborted = f"{m.kind} from {m.sender} to {m.receiver} blocked"
                    return
            elif m.channel == "secure":
                length = len(json.dumps(_canon(m.payload), separators=(",", ":")))
                if not self.interceptor.observe_secure(m.sender, m.receiver, length):
                    self.aborted = f"{m.kind} from {m.sender} to {m.receiver} blocked"
                    return
            elif m.sender != m.receiver:
                raise ValueError("local messages must be addressed to the sender")
            if m.channel != "local":
                self.transcript.record(m)
            self.inbox[m.receiver].append(m)

    def next_message(self) -> Message | None:
        names = list(self.parties)
        for k in range(len(names)):
            name = names[(self._cursor + k) % len(names)]
            if self.inbox[name]:
                return self.inbox[name][0]
        return None

    def finished(self) -> bool:
        return self.aborted is not None or all(p.halted for p in self.parties.values())

    def step(self) -> bool:
        """Deliver one message. Returns False when nothing was delivered."""
        if not self._started:
            self._started = True
            for p in self.parties.values():
                self.post(p.start(self))
            return True
        names = list(self.parties)
        for k in range(len(names)):
            name = names[(self._cursor + k) % len(names)]
            if self.inbox[name]:
                self._cursor = (self._cursor + k + 1) % len(names)
                msg = self.inbox[name].popleft()
                self.events += 1
                self._in_branching_event = msg.branching
                try:
                    out = self.parties[name].receive(msg, self)
                except ProtocolAbort as exc:
                    self.aborted = str(exc) or "abort"
                    return True
                finally:
                    self._in_branching_event = False
                self.post(out)
                return True
        return False

    # -- snapshots -----------------------------------------------------------------

    def snapshot(self) -> World:
        memo: dict[int, Any] = {id(self.transcript): self.transcript}
        for p in self.parties.values():
            for obj in p.shared_objects():
                memo[id(obj)] = obj
        clone = fast_copy(self, memo)
        clone._transcript_len = len(self.transcript.entries)
        return clone


@dataclass
class Leaf:
    """A finished branch. The world is kept only in sample mode."""

    probability: float
    world: World | None
    digest: str


def _run_to_end(world: World, stack: list | None) -> World:
    while not world.finished():
        nxt = world.next_message() if world._started else None
        branching = stack is not None and nxt is not None and nxt.branching
        snap = world.snapshot() if branching else None
        prob_before = world.probability
        world._branch = None
        progressed = world.step()
        if world._branch is not None:
            bp = world._branch
            world.probability = prob_before * bp.p_chosen
            if snap is not None and bp.p_alternative >= qsim.DEGENERATE_BRANCH:
                snap._forced = bp.alternative
                snap.probability = prob_before
                stack.append(snap)
            world._branch = None
        if not progressed:
            waiting = [n for n, p in world.parties.items() if not p.halted]
            raise DeadlockError(f"no message in flight; waiting parties: {waiting}")
    return world


def run_world(world: World, on_leaf=None) -> list[Leaf]:
    """Run to completion. Enumeration mode returns one leaf per branch.

    ``on_leaf(world)`` is called on each finished world before the shared
    transcript is rewound for the next branch; its results are not kept, so
    callers should gather what they need inside it.
    """
    if not world.enumerate_branches:
        _run_to_end(world, None)
        if on_leaf:
            on_leaf(world)
        return [Leaf(world.probability, world, world.transcript.digest())]
    leaves: list[Leaf] = []
    stack: list[World] = [world]
    first = True
    while stack:
        w = stack.pop()
        if not first:
            w.transcript.truncate(w._transcript_len)
        first = False
        _run_to_end(w, stack)
        if on_leaf:
            on_leaf(w)
        leaves.append(Leaf(w.probability, None, w.transcript.digest()))
    return leaves
