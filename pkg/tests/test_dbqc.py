import itertools

import numpy as np
import pytest
from conftest import AXIS_STATES

from verimpqc import angles as ang
from verimpqc import dbqc, mbqc, qsim


def forced(bits):
    """Chooser returning the given outcomes in order, checking they are possible."""
    it = iter(bits)

    def choose(qid, p0, p1):
        bit = next(it)
        assert (p1 if bit else p0) > 1e-12
        return bit

    return choose


def collab_state(owner_theta, others, t_bits):
    store = qsim.QuantumStore()
    store.alloc("own", qsim.plus_state(owner_theta))
    contrib = []
    for j, th in enumerate(others, start=2):
        store.alloc(("c", j), qsim.plus_state(th))
        contrib.append((j, ("c", j)))
    got = dbqc.collaborative_prepare(store, "own", contrib, chooser=forced(t_bits))
    assert got == {j: t for j, t in zip(range(2, 2 + len(others)), t_bits)}
    return store.vector(["own"])


def test_collaborative_two_client_examples():
    assert qsim.equal_up_to_phase(collab_state(1, [2], [0]), qsim.plus_state(3))
    assert qsim.equal_up_to_phase(collab_state(1, [2], [1]), qsim.plus_state(7))


def test_collaborative_recombination_exhaustive():
    for n in (2, 3):
        for thetas in itertools.product(range(8), repeat=n):
            for ts in itertools.product((0, 1), repeat=n - 1):
                want = ang.combine_theta(thetas[0], thetas[1:], ts)
                got = collab_state(thetas[0], list(thetas[1:]), list(ts))
                assert qsim.equal_up_to_phase(got, qsim.plus_state(want))


def test_combine_uses_owner_and_outcomes():
    loc = dbqc.LocationSecrets(owner=2, thetas={1: 3, 2: 1, 3: 5}, rs={1: 1, 2: 1, 3: 1})
    assert dbqc.combine(loc, {1: 0, 3: 1}) == (1 + 3 - 5) % 8
    assert loc.r() == 1


# -- run_dbqc ----------------------------------------------------------------------


def _decrypted_branches(p, inputs, n, rng, **kw):
    return [(r.probability, dbqc.decrypt_outputs(r)) for r in dbqc.run_dbqc(p, inputs, n, rng, enumerate_branches=True, **kw)]


def test_identity_line_two_clients(rng):
    p = mbqc.line_pattern([0, 0])
    psi = qsim.plus_state(1)
    for _ in range(5):
        branches = _decrypted_branches(p, {"q0": psi}, 2, rng)
        assert sum(pr for pr, _ in branches) == pytest.approx(1.0)
        for _, out in branches:
            assert qsim.fidelity(out, psi) > 1 - 1e-10


def test_h_pattern_three_clients(rng):
    p = mbqc.two_line(0)
    for psi in AXIS_STATES:
        for _ in range(2):
            r = dbqc.run_dbqc(p, {1: psi}, 3, rng, owners={2: 2})
            assert qsim.fidelity(dbqc.decrypt_outputs(r), qsim.H @ psi) > 1 - 1e-10


@pytest.mark.parametrize("angles", [[2, 0, 6], [0, 4, 2, 2]])
def test_one_shot_matches_adaptive_on_clifford_line(angles, rng):
    p = mbqc.line_pattern(angles)
    want = mbqc.pattern_operator(p) @ AXIS_STATES[4]
    for adaptive in (True, False):
        for _ in range(3):
            for _, out in _decrypted_branches(p, {"q0": AXIS_STATES[4]}, 2, rng, adaptive=adaptive):
                assert qsim.fidelity(out, want) > 1 - 1e-10


# -- gadgets -----------------------------------------------------------------------


def test_hi_gadget_structure():
    h, i = dbqc.hi_gadget(True), dbqc.hi_gadget(False)
    assert len(h.pattern.vertices) == 9
    assert h.pattern.flow == i.pattern.flow
    assert set(map(frozenset, h.pattern.edges)) == set(map(frozenset, i.pattern.edges))
    assert (h.pattern.angles["b1"], i.pattern.angles["b1"]) == (0, 6)
    assert {v for v in h.pattern.angles if h.pattern.angles[v] != i.pattern.angles[v]} == {"b1"}
    assert all(ang.is_clifford(k) for k in h.pattern.angles.values())
    assert not h.pattern.x_dependencies("b1")


def test_colouring_independence_verdicts():
    ok, reasons = dbqc.colouring_independence(dbqc.hi_gadget(True), dbqc.hi_gadget(False))
    assert ok and not reasons
    ok, reasons = dbqc.colouring_independence(dbqc.line_gadget(True), dbqc.line_gadget(False))
    assert not ok and any("X-dependent" in r for r in reasons)
    bad = dbqc.hi_gadget(True)
    bad.pattern.angles["b3"] = 1
    ok, reasons = dbqc.colouring_independence(bad, dbqc.hi_gadget(False))
    assert not ok and any("non-Clifford" in r for r in reasons)


def test_hi_circuit_corrections_example():
    plus_i = qsim.plus_state(2)
    assert dbqc.hi_circuit_corrections(plus_i)[0] == ("Y", "I")


def _gadget_outputs(gadget, psi, rng, n=2):
    owners = {gadget.top_input: 1}
    secrets = dbqc.sample_location_secrets(gadget.pattern, n, owners, rng)
    pads = {i: int(rng.integers(2)) for i in gadget.pattern.inputs}
    return dbqc.run_gadget(gadget, psi, secrets, pads, rng)


@pytest.mark.parametrize("name", ["hi", "line"])
def test_gadget_h_on_plus_gives_zero(name, rng):
    gadget = dbqc.GADGETS[name](True)
    for _ in range(3):
        outs = _gadget_outputs(gadget, qsim.PLUS, rng)
        assert sum(p for p, _ in outs) == pytest.approx(1.0)
        for _, out in outs:
            assert qsim.fidelity(out, qsim.KET0) > 1 - 1e-10


@pytest.mark.parametrize("name", ["hi", "line"])
def test_gadget_identity_keeps_every_rotated_plus(name, rng):
    gadget = dbqc.GADGETS[name](False)
    for theta in range(8):
        psi = qsim.plus_state(theta)
        for _, out in _gadget_outputs(gadget, psi, rng):
            assert qsim.fidelity(out, psi) > 1 - 1e-10
