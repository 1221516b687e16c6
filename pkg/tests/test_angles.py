import itertools

import numpy as np
from conftest import random_state
from hypothesis import given
from hypothesis import strategies as st

from verimpqc import angles as ang
from verimpqc import qsim

z8 = st.integers(0, 7)
bit = st.integers(0, 1)


def test_add_examples():
    assert ang.add(1, 2) == 3
    assert ang.add(7, 1) == 0
    assert ang.add(4, 4) == 0


def test_signed_examples():
    assert ang.signed(1, 1) == 7
    assert ang.signed(0, 1) == 0
    assert ang.signed(6, 1) == 2


def test_z8_group_table():
    elems = ang.ALL_ANGLES
    for a, b, c in itertools.product(elems, repeat=3):
        assert ang.add(ang.add(a, b), c) == ang.add(a, ang.add(b, c))
    for a in elems:
        assert ang.add(a, 0) == a
        assert ang.add(a, ang.neg(a)) == 0
        assert ang.signed(ang.signed(a, 1), 1) == a


def test_corrected_angle_examples():
    assert ang.corrected_angle(1, 1, 1) == 3
    assert ang.corrected_angle(0, 1, 0) == 0
    assert ang.corrected_angle(2, 0, 1) == 6


def test_qotp_examples():
    reg = qsim.StateRegister().alloc("q", qsim.KET0)
    qsim.qotp_apply(reg, "q", 1, 0)
    assert np.allclose(reg.vector(), qsim.KET1)
    reg = qsim.StateRegister().alloc("q", qsim.PLUS)
    qsim.qotp_apply(reg, "q", 0, 1)
    assert np.allclose(reg.vector(), [2**-0.5, -(2**-0.5)])


def test_qotp_roundtrip_two_qubits(rng):
    for keys in itertools.product((0, 1), repeat=4):
        psi = random_state(rng, 2)
        reg = qsim.StateRegister.from_vector(["a", "b"], psi)
        qsim.qotp_apply(reg, "a", keys[0], keys[1])
        qsim.qotp_apply(reg, "b", keys[2], keys[3])
        qsim.qotp_apply(reg, "a", keys[0], keys[1], decrypt=True)
        qsim.qotp_apply(reg, "b", keys[2], keys[3], decrypt=True)
        assert qsim.fidelity(psi, reg.vector(["a", "b"])) >= 1 - 1e-12


@given(phi=z8, theta=z8, r=bit, sx=bit, sz=bit)
def test_ubqc_delta_formula(phi, theta, r, sx, sz):
    expected = ((-1) ** sx * phi + 4 * sz + theta + 4 * r) % 8
    assert ang.ubqc_delta(phi, theta, r, sx, sz) == expected


@given(phi=z8, theta=z8, r=bit, ds=st.lists(bit, max_size=4))
def test_vbqc_delta_adds_dummy_parity(phi, theta, r, ds):
    assert ang.vbqc_delta(phi, theta, r, 0, 0, ds) == (ang.ubqc_delta(phi, theta, r, 0, 0) + 4 * sum(ds)) % 8


def test_vbqc_delta_trap_example():
    assert ang.vbqc_delta(0, 2, 1, 0, 0, [1]) == 2


@given(owner=z8, others=st.lists(st.tuples(z8, bit), max_size=3))
def test_combine_theta_formula(owner, others):
    thetas = [t for t, _ in others]
    ts = [b for _, b in others]
    assert ang.combine_theta(owner, thetas, ts) == (owner + sum((-1) ** b * t for t, b in others)) % 8


def test_bridge_update_matches_correction():
    # the owed rotation is -pi/2 + b*pi, so folding it in adds +pi/2 (b=0) or -pi/2 (b=1)
    assert ang.bridge_correction(0) == 6
    assert ang.bridge_correction(1) == 2
    for theta in ang.ALL_ANGLES:
        assert ang.bridge_update(theta, 0) == (theta + 2) % 8
        assert ang.bridge_update(theta, 1) == (theta + 6) % 8


@given(angle=z8, kx=bit, kz=bit)
def test_flipped_plus_angle(angle, kx, kz):
    state = qsim.pauli_word(kx, kz) @ qsim.plus_state(angle)
    assert qsim.equal_up_to_phase(state, qsim.plus_state(ang.flipped_plus_angle(angle, kx, kz)))
