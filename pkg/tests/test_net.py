import numpy as np
import pytest

from verimpqc import adversary, qsim
from verimpqc.net import (
    DeadlockError,
    Interceptor,
    Message,
    Party,
    ProtocolAbort,
    World,
    fast_copy,
    run_world,
)


class Pinger(Party):
    def __init__(self, rounds=3):
        super().__init__("a")
        self.rounds = rounds
        self.seen = []

    def start(self, world):
        return [Message("a", "b", "auth", "ping", {"n": 0})]

    def receive(self, msg, world):
        self.seen.append(msg.payload["n"])
        if len(self.seen) == self.rounds:
            self.halted = True
            return []
        return [Message("a", "b", "auth", "ping", {"n": msg.payload["n"] + 1})]


class Ponger(Party):
    def __init__(self, rounds=3):
        super().__init__("b")
        self.rounds = rounds
        self.count = 0

    def receive(self, msg, world):
        self.count += 1
        if self.count == self.rounds:
            self.halted = True
        return [Message("b", "a", "auth", "pong", {"n": msg.payload["n"]})]


def ping_world(seed=0, interceptor=None):
    return World([Pinger(), Ponger()], seed, interceptor=interceptor)


def test_ping_pong_takes_six_events():
    w = ping_world()
    (leaf,) = run_world(w)
    assert w.events == 6
    assert [e["kind"] for e in w.transcript.entries] == ["ping", "pong"] * 3
    assert w.parties["a"].seen == [0, 1, 2]
    assert leaf.digest == w.transcript.digest()


def test_same_seed_same_transcript():
    a, b = ping_world(1), ping_world(1)
    run_world(a)
    run_world(b)
    assert a.transcript.lines() == b.transcript.lines()


def test_unknown_channel_and_receiver():
    with pytest.raises(ValueError):
        Message("a", "b", "carrier-pigeon", "x")
    w = ping_world()
    with pytest.raises(KeyError):
        w.post([Message("a", "nobody", "auth", "x")])


class Recorder(Interceptor):
    def __init__(self, block=None):
        self.auth, self.secure, self.block = [], [], block

    def observe_authenticated(self, msg):
        self.auth.append(msg.payload)
        return msg.kind != self.block

    def observe_secure(self, sender, receiver, length):
        self.secure.append(length)
        return True


class Secret(Party):
    def __init__(self):
        super().__init__("a")
        self.halted = True

    def start(self, world):
        return [Message("a", "b", "secure", "key", {"k": "hunter2"})]


class Sink(Party):
    def __init__(self):
        super().__init__("b")
        self.got = []

    def receive(self, msg, world):
        self.got.append(msg)
        self.halted = True
        return []


def test_secure_channel_reveals_only_length():
    rec = Recorder()
    w = World([Secret(), Sink()], 0, interceptor=rec)
    run_world(w)
    assert rec.auth == []
    assert rec.secure == [len('{"k":"hunter2"}')]
    assert w.parties["b"].got[0].payload == {"k": "hunter2"}


def test_blocked_authenticated_message_aborts():
    w = ping_world(interceptor=Recorder(block="pong"))
    run_world(w)
    assert w.aborted is not None and "pong" in w.aborted
    assert w.transcript.count(kind="pong") == 0


def test_protocol_abort_ends_run():
    class Quitter(Ponger):
        def receive(self, msg, world):
            raise ProtocolAbort("bad ping")

    w = World([Pinger(), Quitter()], 0)
    run_world(w)
    assert w.aborted == "bad ping"


def test_deadlock_is_reported():
    class Waiter(Party):
        def __init__(self):
            super().__init__("w")

    with pytest.raises(DeadlockError):
        run_world(World([Waiter()], 0))


# -- quantum traffic --------------------------------------------------------------------


class Sender(Party):
    def __init__(self, state):
        super().__init__("a")
        self.state = state

    def start(self, world):
        world.alloc("a", "q", self.state)
        self.halted = True
        return [Message("a", "b", "quantum", "qubit", qubits=["q"])]


class Measurer(Party):
    def __init__(self, basis=qsim.Z_BASIS, branchable=False):
        super().__init__("b")
        self.basis, self.branchable, self.bit = basis, branchable, None

    def receive(self, msg, world):
        if msg.channel == "quantum":
            return [Message("b", "b", "local", "measure", branching=self.branchable)]
        self.bit = world.measure("b", "q", self.basis, branchable=self.branchable)
        self.halted = True
        return []


def test_ownership_moves_with_quantum_message():
    w = World([Sender(qsim.KET1), Measurer()], 0)
    run_world(w)
    assert w.parties["b"].bit == 1
    with pytest.raises(PermissionError):
        w.alloc("a", "r", qsim.KET0)
        w.measure("b", "r", qsim.Z_BASIS)


def test_substitution_replaces_in_transit_qubit():
    w = World([Sender(qsim.KET1), Measurer()], 0, interceptor=adversary.SubstituteState(["q"], qsim.KET0))
    run_world(w)
    assert w.parties["b"].bit == 0
    assert len(w.intercepted) == 1
    assert w.store.vector(w.intercepted)[1] == pytest.approx(1.0)


def test_enumeration_explores_both_outcomes():
    w = World([Sender(qsim.PLUS), Measurer(branchable=True)], 0, enumerate_branches=True)
    bits = []
    leaves = run_world(w, on_leaf=lambda lw: bits.append(lw.parties["b"].bit))
    assert sorted(bits) == [0, 1]
    assert sum(lf.probability for lf in leaves) == pytest.approx(1.0)


def test_enumeration_skips_impossible_branch():
    w = World([Sender(qsim.KET0), Measurer(branchable=True)], 0, enumerate_branches=True)
    leaves = run_world(w)
    assert len(leaves) == 1 and leaves[0].probability == pytest.approx(1.0)


def test_quantum_rounds_count_direction_changes():
    w = World([Sender(qsim.KET0), Measurer()], 0)
    run_world(w)
    assert w.transcript.quantum_rounds("a") == 1
    assert w.transcript.quantum_rounds("b") == 1


def test_fast_copy_is_deep_and_respects_memo():
    shared = {"frozen": 1}
    obj = {"a": [1, {"b": np.zeros(2)}], "s": shared, "g": np.random.default_rng(3)}
    out = fast_copy(obj, {id(shared): shared})
    out["a"][1]["b"][0] = 5
    assert obj["a"][1]["b"][0] == 0
    assert out["s"] is shared
    assert out["g"].integers(100) == obj["g"].integers(100)
