"""Deviation models for a malicious server or client coalition.

Server deviations are `ServerBehaviour` subclasses: they only receive the
server's own view (authenticated messages, its measurement outcomes, public
layout) and the qubits it holds. Standalone verification probes use the
hook names of `vbqc.run_vbqc` instead.

The attack on the five-qubit line gadget exploits its choice-dependent
angles. Flipping the reported outcome of the next-to-last gadget qubit and
undoing the resulting Z on the gadget output leaves identity gadgets
untouched but flips the dummy bit of Hadamard gadgets. Picking six of the
nine added qubits of an edge so that every primary qubit touches exactly two
of them leaves traps intact and corrupts the computation whenever its added
qubit is one of the six.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Hashable, Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import angles as ang
from . import dbqc, mbqc, qsim, vbqc
from .dmpqc import (
    AdversaryView,
    ClientBehaviour,
    HeldQubits,
    ServerBehaviour,
    run_dmpqc,
    two_line_scenario,
)
from .net import Interceptor, QuantumAccess

PAULI_NAMES = ("X", "Y", "Z")
SERVER_TIMES = ("after_dbqc", "after_entangle", "before_measure", "before_return")


def noncompliant_line_gadget(apply_h: bool) -> mbqc.Pattern:
    """Five-qubit line: angles (0,0,0,0) for identity, (0,2,2,2) for Hadamard."""
    return dbqc.line_gadget(apply_h).pattern


# -- server deviations in the full protocol -------------------------------------------


class PauliInjection(ServerBehaviour):
    """Apply a Pauli to chosen DT qubits at one point of the run."""

    def __init__(self, qubits: Iterable[tuple], pauli: str, time: str = "after_entangle") -> None:
        if pauli not in PAULI_NAMES:
            raise ValueError(f"unknown Pauli {pauli!r}")
        if time not in SERVER_TIMES:
            raise ValueError(f"unknown time {time!r}")
        self.qubits = list(qubits)
        self.pauli = pauli
        self.time = time

    def _hit(self, held: HeldQubits, only: Iterable[tuple] | None = None) -> None:
        for q in self.qubits:
            if (only is None or q in only) and held.holds(q):
                held.pauli(self.pauli, q)

    def after_dbqc(self, view, held):
        if self.time == "after_dbqc":
            self._hit(held)

    def after_entangle(self, view, held):
        if self.time == "after_entangle":
            self._hit(held)

    def before_measure(self, view, held, x):
        if self.time == "before_measure":
            self._hit(held, [x])

    def before_return(self, view, held, qubits):
        if self.time == "before_return":
            self._hit(held, qubits)


class OutcomeFlip(ServerBehaviour):
    """Report the opposite outcome for chosen DT qubits of the verifiable phase."""

    def __init__(self, qubits: Iterable[tuple]) -> None:
        self.qubits = set(qubits)

    def report(self, view, x, bit):
        return bit ^ 1 if x in self.qubits else bit


class Scripted(ServerBehaviour):
    """Arbitrary hooks given as callables keyed by hook name."""

    def __init__(self, **hooks: Callable) -> None:
        unknown = set(hooks) - {
            "after_dbqc", "gadget_report", "after_gadget", "after_entangle", "before_measure", "report", "before_return"
        }
        if unknown:
            raise ValueError(f"unknown hooks {sorted(unknown)}")
        for name, fn in hooks.items():
            setattr(self, name, fn)


def attack_configurations() -> list[tuple[int, int, int]]:
    """The six permutations sigma; added qubit (k, l) is attacked iff l != sigma(k)."""
    return list(itertools.permutations(range(3)))


def attacked_added(edge: tuple, sigma: Sequence[int]) -> list[tuple]:
    return [vbqc.added(edge, k, l) for k in range(3) for l in range(3) if l != sigma[k]]


class GadgetFlipAttack(ServerBehaviour):
    """Flip the next-to-last gadget outcome on chosen DT qubits.

    With ``compensate`` the server also applies the Z that this flip is
    known to leave on an identity gadget's output, so identity gadgets come
    out clean.
    """

    def __init__(self, targets: Iterable[tuple], compensate: bool = True) -> None:
        self.targets = set(targets)
        self.compensate = compensate

    def gadget_report(self, view: AdversaryView, x, outcomes):
        if x not in self.targets:
            return outcomes
        v = view.layout.template.next_to_last()
        flipped = dict(outcomes)
        flipped[v] ^= 1
        return flipped

    def after_gadget(self, view: AdversaryView, held: HeldQubits, x):
        if self.compensate and x in self.targets:
            held.pauli("Z", x)


def six_of_nine_attack(sigma: Sequence[int], edge: tuple = (1, 2), compensate: bool = True) -> GadgetFlipAttack:
    return GadgetFlipAttack(attacked_added(edge, sigma), compensate)


# -- client-side deviations ------------------------------------------------------------


class TrapFlipClient(ClientBehaviour):
    """A client that lies about its trap outcome."""

    def trap_report(self, x, bit):
        return bit ^ 1


class SubstituteState(Interceptor):
    """On the insecure quantum channel, replace chosen qubits by a fixed state."""

    def __init__(self, qubits: Iterable[Hashable], state: np.ndarray, sender: str | None = None) -> None:
        self.qubits = set(qubits)
        self.state = np.asarray(state, dtype=complex)
        self.sender = sender

    def on_quantum(self, sender: str, receiver: str, access: QuantumAccess) -> None:
        if self.sender is not None and sender != self.sender:
            return
        for q in access.qubits:
            if q in self.qubits:
                access.substitute(q, self.state)


# -- attack statistics --------------------------------------------------------------------


@dataclass
class AttackStats:
    runs: int = 0
    detected: int = 0
    corrupted: int = 0
    per_configuration: dict[tuple, tuple[int, int, int]] = field(default_factory=dict)
    per_colouring: dict[tuple, tuple[int, int]] = field(default_factory=dict)

    @property
    def corrupted_fraction(self) -> float:
        return self.corrupted / self.runs if self.runs else 0.0

    @property
    def detected_fraction(self) -> float:
        return self.detected / self.runs if self.runs else 0.0


def run_six_of_nine_attack(
    gadget: str = "line",
    phi: int = 0,
    state: np.ndarray | None = None,
    seed: int = 0,
    compensate: bool = True,
) -> AttackStats:
    """Run the six-out-of-nine attack against every colouring of the 2-line.

    Each (configuration, colouring) pair is one full protocol run in sample
    mode: trap outcomes are deterministic here, and the default input |0>
    with angle 0 makes the induced Y on the output orthogonal to the ideal.
    """
    state = qsim.KET0 if state is None else state
    base = mbqc.two_line(phi)
    dt = vbqc.build_dtg(base.vertices, base.edges)
    colourings = vbqc.enumerate_colourings(dt)
    stats = AttackStats()
    for sigma in attack_configurations():
        det = cor = 0
        for n, col in enumerate(colourings):
            cfg = two_line_scenario(
                phi, 2, state, gadget=gadget, seed=seed + n,
                server=six_of_nine_attack(sigma, compensate=compensate),
                input_positions={1: col.computation_position(1)},
                fixed_colouring=col,
            )
            rep = run_dmpqc(cfg)
            detected = not rep.accepted
            corrupted = rep.accepted and rep.min_fidelity < 1 - 1e-9
            det += detected
            cor += corrupted
            key = col.positions
            d0, c0 = stats.per_colouring.get(key, (0, 0))
            stats.per_colouring[key] = (d0 + detected, c0 + corrupted)
        stats.per_configuration[tuple(sigma)] = (len(colourings), det, cor)
        stats.runs += len(colourings)
        stats.detected += det
        stats.corrupted += cor
    return stats


# -- gadget effect operators -------------------------------------------------------------


def gadget_effects(
    gadget_factory: Callable[[bool], dbqc.Gadget],
    apply_h: bool,
    flip: bool = True,
    compensate: bool = False,
    samples: int = 4,
    seed: int = 0,
) -> list[np.ndarray]:
    """Effect operators E with (decrypted output) = E G (input), per branch.

    The top input is half of a Bell pair with a reference qubit, so the final
    two-qubit state is the Choi vector of E G. Every branch of the one-shot
    gadget is enumerated for ``samples`` random secret draws.
    """
    rng = np.random.default_rng(seed)
    g = gadget_factory(apply_h)
    p = g.pattern
    target = qsim.H if apply_h else qsim.I2
    ntl = g.next_to_last()
    effects = []
    for _ in range(samples):
        secrets = {v: dbqc.LocationSecrets(1, {1: int(rng.integers(8))}, {1: int(rng.integers(2))}) for v in g.locations}
        pads = {v: 0 for v in p.inputs}
        plan = dbqc.GadgetPlan(g, secrets, pads, {v: secrets[v].thetas[1] for v in g.locations})
        deltas = plan.one_shot_deltas()
        reg = qsim.StateRegister(cap=len(p.vertices) + 1)
        reg.alloc("ref")
        reg.alloc(g.top_input)
        reg.apply(qsim.H, ["ref"])
        reg.apply(qsim.CNOT, ["ref", g.top_input])
        reg.apply(qsim.zrot(secrets[g.top_input].thetas[1]), [g.top_input])
        for v in p.vertices:
            if v == g.top_input:
                continue
            reg.alloc(v, qsim.PLUS if v == g.output else qsim.plus_state(secrets[v].thetas[1]))
        for a, b in p.edges:
            reg.cz(a, b)
        stack = [(reg, {})]
        order = p.measurement_order()
        while stack:
            st, reported = stack.pop()
            if len(reported) == len(order):
                if compensate:
                    st.apply(qsim.Z, [g.output])
                kx, kz = plan.output_key(reported)
                st.apply(qsim.pauli_word(kx, kz).conj().T, [g.output])
                choi = st.vector(["ref", g.output]).reshape(2, 2)
                eg = choi.T * np.sqrt(2)
                effects.append(eg @ target.conj().T)
                continue
            v = order[len(reported)]
            for bit, _, child in st.branch(v, qsim.xy_basis(deltas[v])):
                shown = bit ^ 1 if (flip and v == ntl) else bit
                stack.append((child, {**reported, v: shown}))
    return effects


def distinct_effects(effects: Sequence[np.ndarray], atol: float = 1e-9) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for e in effects:
        if all(qsim.phase_distance(e, f) > atol for f in out):
            out.append(e)
    return out


def effect_distinguishability(gadget_factory: Callable[[bool], dbqc.Gadget], compensate: bool = False, seed: int = 0) -> float:
    """Largest phase-insensitive distance between any H-choice and I-choice effect."""
    eh = distinct_effects(gadget_effects(gadget_factory, True, compensate=compensate, seed=seed))
    ei = distinct_effects(gadget_effects(gadget_factory, False, compensate=compensate, seed=seed))
    return max(qsim.phase_distance(a, b) for a in eh for b in ei)


# -- single-Pauli probes on the verifiable phase ----------------------------------------------


class VbqcPauli:
    """`run_vbqc` deviation applying one Pauli to one DT qubit."""

    TIMES = ("before_entangle", "after_entangle")

    def __init__(self, x: tuple, pauli: str, time: str = "after_entangle") -> None:
        if time not in self.TIMES:
            raise ValueError(f"unknown time {time!r}")
        self.x = x
        self.matrix = qsim.PAULIS[pauli]
        self.time = time

    def after_prepare(self, store, dt):
        if self.time == "before_entangle":
            store.apply(self.matrix, [self.x])

    def after_entangle(self, store, dt):
        if self.time == "after_entangle":
            store.apply(self.matrix, [self.x])


@dataclass
class ProbeStats:
    detection: float
    undetected_corruption: float
    runs: int


def single_pauli_probe(
    pauli: str,
    x: tuple,
    phi: int = 1,
    state: np.ndarray | None = None,
    time: str = "after_entangle",
    enumerate_theta: bool = True,
    seed: int = 0,
) -> ProbeStats:
    """Exact detection probability of one Pauli on DT qubit x of the 2-line.

    Averages uniformly over all 36 colourings and, with ``enumerate_theta``,
    over the eight pad angles of x when x is not a dummy. Branches are fully
    enumerated with the exact reductions of `run_vbqc`.
    """
    state = qsim.PLUS if state is None else state
    base = mbqc.two_line(phi)
    dt = vbqc.build_dtg(base.vertices, base.edges)
    rng = np.random.default_rng(seed)
    total_det = total_cor = 0.0
    runs = 0
    cols = vbqc.enumerate_colourings(dt)
    for col in cols:
        secrets = vbqc.VbqcSecrets.sample(dt, col, base.inputs, rng)
        thetas = range(8) if enumerate_theta and col.role(x) != vbqc.DUMMY else [None]
        det = cor = 0.0
        for th in thetas:
            if th is not None:
                secrets.theta[x] = th
            res = vbqc.run_vbqc(
                base, {1: state}, rng, col, secrets, deviation=VbqcPauli(x, pauli, time),
                enumerate_branches=True, merge_dummies=True, stop_on_abort=True,
            )
            det += res.abort_probability
            cor += res.undetected_error()
            runs += 1
        total_det += det / len(thetas)
        total_cor += cor / len(thetas)
    return ProbeStats(total_det / len(cols), total_cor / len(cols), runs)


def detection_oracle(pauli: str, x: tuple, dt: vbqc.DTGraph) -> float:
    """Closed form for a Pauli on x after entanglement.

    Only a trap at x can notice. Z always flips a trap outcome; X and Y flip
    it with probability sin^2 or cos^2 of its pad, both averaging 1/2.
    """
    cols = vbqc.enumerate_colourings(dt)
    p_trap = sum(c.role(x) == vbqc.TRAP for c in cols) / len(cols)
    if pauli == "Z":
        return p_trap
    flip = np.mean([np.sin(ang.radians(t)) ** 2 for t in ang.ALL_ANGLES])
    return float(p_trap * flip)


# -- scenario-file helpers ---------------------------------------------------------------------


def _as_tuple(obj):
    if isinstance(obj, list):
        return tuple(_as_tuple(v) for v in obj)
    return obj


def from_entries(entries: Sequence[dict]) -> ServerBehaviour | None:
    """Build server deviations from scenario-file entries."""
    from .dmpqc import CombinedBehaviour

    parts: list[ServerBehaviour] = []
    for entry in entries:
        kind = entry.get("kind")
        if kind == "pauli_inject":
            parts.append(PauliInjection([_as_tuple(q) for q in entry["qubits"]], entry["pauli"], entry.get("time", "after_entangle")))
        elif kind == "outcome_flip":
            parts.append(OutcomeFlip([_as_tuple(q) for q in entry["qubits"]]))
        elif kind == "six_of_nine":
            sigma = attack_configurations()[int(entry.get("configuration", 0))]
            edge = _as_tuple(entry.get("edge", [1, 2]))
            parts.append(six_of_nine_attack(sigma, edge, bool(entry.get("compensate", True))))
        else:
            raise ValueError(f"unknown deviation kind {kind!r}")
    if not parts:
        return None
    return parts[0] if len(parts) == 1 else CombinedBehaviour(parts)


def client_behaviours_from_entries(entries: Sequence[dict]) -> dict[int, ClientBehaviour]:
    out: dict[int, ClientBehaviour] = {}
    for entry in entries:
        if entry.get("kind") != "trap_flip":
            raise ValueError(f"unknown client deviation {entry.get('kind')!r}")
        out[int(entry["client"])] = TrapFlipClient()
    return out


__all__ = [
    "AttackStats", "GadgetFlipAttack", "OutcomeFlip", "PauliInjection", "ProbeStats", "Scripted",
    "SubstituteState", "TrapFlipClient", "VbqcPauli", "six_of_nine_attack", "attack_configurations",
    "attacked_added", "client_behaviours_from_entries", "detection_oracle", "distinct_effects",
    "effect_distinguishability", "from_entries", "gadget_effects", "noncompliant_line_gadget",
    "run_six_of_nine_attack", "single_pauli_probe",
]
