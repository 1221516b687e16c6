import numpy as np
import pytest
from conftest import random_density, random_state
from hypothesis import given, settings
from hypothesis import strategies as st

from verimpqc import qsim

MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)


def single(state) -> qsim.StateRegister:
    return qsim.StateRegister().alloc("q0", state)


# -- alloc / gates / measure examples ---------------------------------------------


def test_alloc_examples():
    assert np.allclose(single(qsim.plus_state(0)).vector(), qsim.PLUS)
    assert np.allclose(single(qsim.plus_state(4)).vector(), MINUS)
    assert np.allclose(single(qsim.KET1).vector(), [0, 1])


def test_alloc_errors():
    reg = single(qsim.KET0)
    with pytest.raises(ValueError):
        reg.alloc("q0")
    small = qsim.StateRegister(cap=2).alloc("a").alloc("b")
    with pytest.raises(qsim.QubitCapExceeded):
        small.alloc("c")


def test_gate_examples():
    assert qsim.equal_up_to_phase(single(qsim.KET0).apply(qsim.H, "q0").vector(), qsim.PLUS)
    assert np.allclose(single(qsim.PLUS).apply(qsim.zrot(2), "q0").vector(), qsim.plus_state(2))
    reg = qsim.StateRegister().alloc("a", qsim.PLUS).alloc("b", qsim.KET1).cz("a", "b")
    assert np.allclose(reg.vector(), np.array([0, 1, 0, -1]) / np.sqrt(2))


def test_gate_errors():
    reg = qsim.StateRegister().alloc("a").alloc("b")
    with pytest.raises(KeyError):
        reg.apply(qsim.X, "zz")
    with pytest.raises(ValueError):
        reg.cz("a", "a")
    with pytest.raises(ValueError):
        reg.apply(qsim.CNOT, ["a", "a"])


def test_measure_examples():
    for k in range(8):
        bit, p = single(qsim.plus_state(k)).measure("q0", qsim.xy_basis(k), outcome=0)
        assert (bit, p) == (0, pytest.approx(1.0))
        assert single(qsim.plus_state(k)).probabilities("q0", qsim.xy_basis(k + 4))[1] == pytest.approx(1.0)
    reg = single(qsim.KET1)
    assert reg.probabilities("q0")[1] == pytest.approx(1.0)
    reg.measure("q0", outcome=1)
    assert "q0" not in reg


def test_measure_needs_rng_or_outcome():
    with pytest.raises(ValueError):
        single(qsim.PLUS).measure("q0")
    with pytest.raises(ValueError):
        single(qsim.KET0).measure("q0", outcome=1)


def test_branch_examples():
    branches = single(qsim.PLUS).branch("q0")
    assert [(b, round(p, 12)) for b, p, _ in branches] == [(0, 0.5), (1, 0.5)]
    assert [(b, p) for b, p, _ in single(qsim.KET0).branch("q0")] == [(0, 1.0)]


@pytest.mark.parametrize("theta", range(8))
def test_branch_x_on_rotated_plus_matches_sin_squared(theta):
    state = qsim.X @ qsim.plus_state(theta)
    # a zero-probability branch is dropped, so a missing outcome 1 means p1 = 0
    p1 = sum(p for b, p, _ in single(state).branch("q0", qsim.xy_basis(theta)) if b == 1)
    assert p1 == pytest.approx(np.sin(np.pi * theta / 4) ** 2, abs=1e-12)


def test_equal_up_to_phase_examples():
    assert qsim.equal_up_to_phase(qsim.KET0, np.exp(1j * np.pi / 4) * qsim.KET0, 1e-9)
    assert not qsim.equal_up_to_phase(qsim.KET0, qsim.KET1, 1e-9)


# -- properties ----------------------------------------------------------------------

GATES = [qsim.X, qsim.Y, qsim.Z, qsim.H] + [qsim.zrot(k) for k in range(8)]


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    ops=st.lists(st.tuples(st.integers(0, len(GATES) - 1), st.integers(0, 2), st.integers(0, 2)), max_size=12),
)
def test_norm_preserved(seed, ops):
    rng = np.random.default_rng(seed)
    reg = qsim.StateRegister()
    for q in range(3):
        reg.alloc(q, random_state(rng))
    for g, a, b in ops:
        reg.apply(GATES[g], [a])
        if a != b:
            reg.cz(a, b)
    assert abs(np.linalg.norm(reg.vector()) - 1) < 1e-12
    reg.measure(0, qsim.xy_basis(int(rng.integers(8))), rng=rng)
    assert abs(np.linalg.norm(reg.vector()) - 1) < 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(0, 7))
def test_branch_probabilities_sum_to_one(seed, k):
    rng = np.random.default_rng(seed)
    reg = qsim.StateRegister.from_vector([0, 1, 2], random_state(rng, 3))
    for q in range(3):
        for basis in (qsim.Z_BASIS, qsim.xy_basis(k)):
            assert abs(sum(p for _, p, _ in reg.branch(q, basis)) - 1) < 1e-12


def test_gate_algebra(rng):
    for _ in range(20):
        psi = random_state(rng, 3)
        for g in (qsim.X, qsim.Z, qsim.H):
            reg = qsim.StateRegister.from_vector([0, 1, 2], psi)
            q = int(rng.integers(3))
            reg.apply(g, q).apply(g, q)
            assert qsim.fidelity(psi, reg.vector()) >= 1 - 1e-12
    for a in range(8):
        for b in range(8):
            assert np.allclose(qsim.zrot(a) @ qsim.zrot(b), qsim.zrot((a + b) % 8))


def test_qotp_twirl_is_maximally_mixed(rng):
    for _ in range(20):
        assert np.max(np.abs(qsim.qotp_twirl(random_density(rng)) - np.eye(2) / 2)) < 1e-12


@pytest.mark.parametrize("n", [1, 2])
def test_pauli_twirl_cross_terms_vanish(rng, n):
    words = qsim.pauli_group(n)
    for _ in range(20):
        rho = random_density(rng, n)
        for i, q in enumerate(words):
            for j, qp in enumerate(words):
                if i != j:
                    assert np.max(np.abs(qsim.pauli_twirl_cross(rho, q, qp))) < 1e-10


def test_pauli_twirl_diagonal_terms_survive(rng):
    rho = random_density(rng)
    for q in qsim.pauli_group(1):
        assert np.allclose(qsim.pauli_twirl_cross(rho, q, q), 4 * q @ rho @ q.conj().T)


# -- store -------------------------------------------------------------------------------


def test_store_lazy_cz_matches_dense(rng):
    psis = [random_state(rng) for _ in range(3)]
    store = qsim.QuantumStore()
    dense = qsim.StateRegister()
    for q, psi in enumerate(psis):
        store.alloc(q, psi)
        dense.alloc(q, psi)
    for a, b in [(0, 1), (1, 2)]:
        store.cz_lazy(a, b)
        dense.cz(a, b)
    assert qsim.fidelity(dense.vector([0, 1, 2]), store.density([0, 1, 2])) > 1 - 1e-12


def test_store_rename_and_peak():
    store = qsim.QuantumStore()
    store.alloc("a", qsim.PLUS)
    store.alloc("b", qsim.KET1)
    store.cz("a", "b")
    store.rename("a", "c")
    assert "c" in store and "a" not in store
    assert store.peak == 2
    with pytest.raises(ValueError):
        store.rename("c", "b")


def test_qotp_roundtrip(rng):
    for kx in (0, 1):
        for kz in (0, 1):
            psi = random_state(rng)
            reg = single(psi)
            qsim.qotp_apply(reg, "q0", kx, kz)
            qsim.qotp_apply(reg, "q0", kx, kz, decrypt=True)
            assert np.allclose(reg.vector(), psi)


def test_fidelity_helpers(rng):
    psi = random_state(rng)
    rho = np.outer(psi, psi.conj())
    assert qsim.fidelity(psi, rho) == pytest.approx(1.0)
    assert qsim.mixed_fidelity(rho, np.eye(2) / 2) == pytest.approx(0.5)
    bell = np.array([1, 0, 0, 1]) / np.sqrt(2)
    assert np.allclose(qsim.partial_trace(np.outer(bell, bell), 2, [0]), np.eye(2) / 2)
    assert qsim.identify_pauli(qsim.Y) == (1, 1)
    assert qsim.identify_pauli(qsim.H) is None
