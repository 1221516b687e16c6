"""Single-client blind execution of a measurement pattern.

The client pads every qubit with a random rotation theta and hides each
outcome behind a random bit r, so the server only ever sees uniformly random
angles delta = phi' + theta + r*pi. Input qubits are additionally padded with
X^a, which the client folds into the angle corrections of the input and of
its neighbours.

The helpers here are shared by the multi-client and verifiable layers.
"""

from __future__ import annotations

from collections.abc import Hashable, Mapping
from dataclasses import dataclass

import numpy as np

from . import angles as ang
from . import mbqc, qsim

Vertex = Hashable


def encrypt_input(state: np.ndarray, theta: int, a: int) -> np.ndarray:
    """Z(theta) X^a applied to a single-qubit state vector."""
    return qsim.zrot(theta) @ np.linalg.matrix_power(qsim.X, a % 2) @ np.asarray(state, dtype=complex)


def pad_z(p: mbqc.Pattern, v: Vertex, pads: Mapping[Vertex, int]) -> int:
    """Z shift on v caused by X pads on adjacent inputs."""
    return sum(pads.get(i, 0) for i in p.inputs if i in p.neighbours(v)) % 2


def blind_delta(
    p: mbqc.Pattern,
    v: Vertex,
    theta: int,
    r: int,
    pads: Mapping[Vertex, int],
    s: Mapping[Vertex, int] | None = None,
) -> int:
    """Measurement angle sent to the server for vertex v.

    With ``s`` (logical outcomes so far) the angle is fully adapted. With
    ``s=None`` only the pad bits are folded in, which is the one-shot schedule
    valid for Clifford patterns; `effective_outcomes` then repairs the results.
    """
    phi = p.angles.get(v, p.output_angles.get(v))
    s_x, s_z = mbqc.signals(p, v, s) if s is not None else (0, 0)
    if v in p.inputs:
        s_x ^= pads.get(v, 0)
    s_z ^= pad_z(p, v, pads)
    return ang.ubqc_delta(phi, theta, r, s_x, s_z)


def effective_outcomes(
    p: mbqc.Pattern,
    reported: Mapping[Vertex, int],
    rs: Mapping[Vertex, int],
) -> dict[Vertex, int]:
    """Logical outcomes of a one-shot Clifford run.

    Measuring at phi instead of the adapted angle differs by pi exactly when
    s_Z = 1, or when s_X = 1 and phi is an odd multiple of pi/2. Either way
    the result is flipped.
    """
    s: dict = {}
    for v in p.measurement_order():
        phi = p.angles.get(v, p.output_angles.get(v))
        if not ang.is_clifford(phi):
            raise ValueError("one-shot schedule needs Clifford angles")
        s_x, s_z = mbqc.signals(p, v, s)
        s[v] = (reported[v] + rs[v] + s_z + s_x * ang.odd_half_pi(phi)) % 2
    return s


def output_keys(p: mbqc.Pattern, s: Mapping[Vertex, int], pads: Mapping[Vertex, int]) -> dict[Vertex, tuple[int, int]]:
    """Pauli pad (kx, kz) on each kept output: state = X^kx Z^kz (logical)."""
    keys = {}
    for o in p.kept_outputs:
        s_x, s_z = mbqc.signals(p, o, s)
        if o in p.inputs:
            s_x ^= pads.get(o, 0)
        keys[o] = (s_x, s_z ^ pad_z(p, o, pads))
    return keys


@dataclass
class UbqcSecrets:
    theta: dict[Vertex, int]
    r: dict[Vertex, int]
    a: dict[Vertex, int]

    @classmethod
    def sample(cls, p: mbqc.Pattern, rng: np.random.Generator) -> UbqcSecrets:
        measured = p.measurement_order()
        return cls(
            theta={v: int(rng.integers(8)) for v in measured},
            r={v: int(rng.integers(2)) for v in measured},
            a={i: int(rng.integers(2)) for i in p.inputs},
        )


@dataclass
class UbqcBranch:
    probability: float
    deltas: dict[Vertex, int]
    reported: dict[Vertex, int]
    keys: dict[Vertex, tuple[int, int]]
    output: np.ndarray


def run_ubqc(
    p: mbqc.Pattern,
    input_state: np.ndarray,
    rng: np.random.Generator,
    secrets: UbqcSecrets | None = None,
    enumerate_branches: bool = False,
    deviation=None,
) -> UbqcBranch | list[UbqcBranch]:
    """Client and server in one loop.

    ``input_state`` is the joint input vector (inputs in pattern order). The
    client sends padded inputs and |+_theta> qubits; outputs come back padded
    with Pauli keys and are decrypted before being returned. Only kept
    outputs must be non-inputs, as in every pattern used here.

    ``deviation`` may define ``before_measure(register, v, delta)``, called on
    the server's register before each measurement. Nothing detects it.
    """
    secrets = secrets or UbqcSecrets.sample(p, rng)
    reg = qsim.StateRegister.from_vector(p.inputs, input_state) if p.inputs else qsim.StateRegister()
    for i in p.inputs:
        op = qsim.zrot(secrets.theta[i]) @ np.linalg.matrix_power(qsim.X, secrets.a[i])
        reg.apply(op, [i])
    for v in p.vertices:
        if v in p.inputs:
            continue
        reg.alloc(v, qsim.plus_state(secrets.theta[v]) if v in secrets.theta else qsim.PLUS)
    for a, b in p.edges:
        reg.cz(a, b)
    order = p.measurement_order()
    leaves: list[UbqcBranch] = []
    stack = [(reg, {}, {}, 1.0)]
    while stack:
        cur, reported, deltas, prob = stack.pop()
        if len(reported) == len(order):
            s = {v: (reported[v] + secrets.r[v]) % 2 for v in order}
            keys = output_keys(p, s, secrets.a)
            for o in p.kept_outputs:
                qsim.qotp_apply(cur, o, *keys[o], decrypt=True)
            leaves.append(UbqcBranch(prob, deltas, reported, keys, cur.vector(p.kept_outputs)))
            continue
        v = order[len(reported)]
        s = {u: (reported[u] + secrets.r[u]) % 2 for u in reported}
        delta = blind_delta(p, v, secrets.theta[v], secrets.r[v], secrets.a, s)
        basis = qsim.xy_basis(delta)
        if hook := getattr(deviation, "before_measure", None):
            hook(cur, v, delta)
        if enumerate_branches:
            for bit, pb, child in cur.branch(v, basis):
                stack.append((child, {**reported, v: bit}, {**deltas, v: delta}, prob * pb))
        else:
            bit, _ = cur.measure(v, basis, rng=rng)
            stack.append((cur, {**reported, v: bit}, {**deltas, v: delta}, prob))
    return leaves if enumerate_branches else leaves[0]


def delta_multiset(phi_corrected: int) -> list[int]:
    """Every delta produced over all (theta, r) for a fixed adapted angle."""
    return sorted(ang.ubqc_delta(phi_corrected, theta, r, 0, 0) for theta in ang.ALL_ANGLES for r in (0, 1))
