import numpy as np
import pytest
from conftest import AXIS_STATES, random_state

from verimpqc import mbqc, qsim


def j_gate(phi: int) -> np.ndarray:
    """Single step of a line pattern measured at phi."""
    return qsim.H @ qsim.zrot(-phi)


def test_dependency_sets_two_line():
    sx, sz = mbqc.dependency_sets(mbqc.two_line(0))
    assert sx[2] == {1}
    assert sz[2] == set()


def test_dependency_sets_three_line():
    p = mbqc.line_pattern([0, 0])
    sx, sz = mbqc.dependency_sets(p)
    # q0 is a neighbour of f(q1) = q2? no; q2 is a neighbour of f(q0) = q1, so q0 Z-corrects q2
    assert sx["q2"] == {"q1"} and sz["q2"] == {"q0"}
    assert sx["q1"] == {"q0"} and sz["q1"] == set()


def test_dependency_sets_isolated_output():
    p = mbqc.Pattern(["o"], [], ["o"], ["o"], {}, {})
    p.validate()
    assert mbqc.dependency_sets(p) == ({"o": set()}, {"o": set()})


def test_flow_validation_rejects_non_neighbour():
    with pytest.raises(mbqc.FlowError):
        mbqc.check_flow([1, 2, 3], [(1, 2), (2, 3)], [1], [3], {1: 3, 2: 3})
    with pytest.raises(mbqc.FlowError):
        mbqc.check_flow([1, 2, 3], [(1, 2), (2, 3)], [1], [3], {1: 3, 2: 1})


def test_order_must_respect_flow():
    p = mbqc.line_pattern([0, 0])
    bad = mbqc.Pattern(p.vertices, p.edges, p.inputs, p.outputs, p.flow, p.angles, order=["q1", "q0"])
    with pytest.raises(mbqc.FlowError):
        bad.validate()


def test_find_flow_on_line_and_failure():
    p = mbqc.line_pattern([0, 0, 0])
    assert mbqc.find_flow(p.vertices, p.edges, p.inputs, p.outputs) == p.flow
    # a triangle with two outputs and one input has no flow into the outputs' free slots
    with pytest.raises(mbqc.FlowError):
        mbqc.find_flow([1, 2, 3], [(1, 2), (1, 3)], [1], [2])


def test_corrected_angle_in_runner_matches_h_on_axes():
    p = mbqc.two_line(0)
    for rho in AXIS_STATES:
        for branch in mbqc.enumerate_mbqc(p, rho):
            assert qsim.fidelity(qsim.H @ rho, branch[2].vector()) >= 1 - 1e-9


@pytest.mark.parametrize("phi", range(8))
def test_two_line_oracle(phi, rng):
    psi = random_state(rng)
    for _, _, reg in mbqc.enumerate_mbqc(mbqc.two_line(phi), psi):
        assert qsim.fidelity(j_gate(phi) @ psi, reg.vector()) >= 1 - 1e-9
    # phi = -theta' gives H Z(theta')
    for _, _, reg in mbqc.enumerate_mbqc(mbqc.two_line((-phi) % 8), psi):
        assert qsim.fidelity(qsim.H @ qsim.zrot(phi) @ psi, reg.vector()) >= 1 - 1e-9


@pytest.mark.parametrize("phi", range(8))
def test_three_line_oracle(phi, rng):
    psi = random_state(rng)
    second = (3 * phi + 1) % 8
    p = mbqc.line_pattern([phi, second])
    target = j_gate(second) @ j_gate(phi) @ psi
    for _, _, reg in mbqc.enumerate_mbqc(p, psi):
        assert qsim.fidelity(target, reg.vector()) >= 1 - 1e-9


def test_branch_independence_small_patterns(rng):
    patterns = [mbqc.line_pattern(list(rng.integers(0, 8, size=k))) for k in range(1, 6)]
    for p in patterns:
        psi = random_state(rng)
        outs = [reg.vector() for _, _, reg in mbqc.enumerate_mbqc(p, psi)]
        assert len(outs) == 2 ** len(p.measured)
        for o in outs[1:]:
            assert qsim.equal_up_to_phase(outs[0], o, 1e-9)


def test_empty_measurement_set_is_identity(rng):
    p = mbqc.Pattern(["o"], [], ["o"], ["o"], {}, {})
    psi = random_state(rng)
    reg, outcomes = mbqc.run_mbqc(p, psi)
    assert outcomes == {}
    assert qsim.fidelity(psi, reg.vector()) >= 1 - 1e-12


def test_sampled_run_agrees_with_operator(rng):
    p = mbqc.line_pattern([1, 3, 2])
    for _ in range(10):
        psi = random_state(rng)
        reg, _ = mbqc.run_mbqc(p, psi, rng=rng)
        assert qsim.fidelity(mbqc.pattern_operator(p) @ psi, reg.vector()) >= 1 - 1e-9
