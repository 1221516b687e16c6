from collections import Counter

import numpy as np
import pytest

from verimpqc import adversary, dmpqc, mbqc, smpc, vbqc
from verimpqc.net import Message, ProtocolAbort, run_world

LAYOUT = smpc.Layout(mbqc.two_line(1), 2, {1: 1}, {2: 2})


def submissions(layout, rng, positions=None):
    subs = {}
    for j in layout.clients:
        keys = [(x, loc) for x in layout.dt.vertices for loc in layout.locations]
        sub = {
            "thetas": {k: int(rng.integers(8)) for k in keys},
            "rs": {k: int(rng.integers(2)) for k in keys},
            "inputs": {},
        }
        for i, owner in layout.input_owner.items():
            if owner == j:
                p = (positions or {}).get(i, int(rng.integers(3)))
                sub["inputs"][i] = {"position": p, "a": int(rng.integers(2))}
        subs[j] = sub
    return subs


def ready(rng, positions=None, **kw):
    f = smpc.SmpcFunctionality(LAYOUT, rng, **kw)
    f.init(submissions(LAYOUT, rng, positions))
    return f


def random_t_bits(layout, rng):
    out = {}
    for x in layout.dt.vertices:
        for loc in layout.locations:
            owner = layout.location_owner(x, loc)
            out[(x, loc)] = {j: int(rng.integers(2)) for j in layout.clients if j != owner}
    return out


def run_sample(config):
    (leaf,) = run_world(dmpqc.build_world(config))
    return leaf.world


# -- layout --------------------------------------------------------------------


def test_layout_rejects_bad_configurations():
    with pytest.raises(ValueError):
        smpc.Layout(mbqc.two_line(0), 0, {1: 1}, {2: 1})
    with pytest.raises(ValueError):
        smpc.Layout(mbqc.two_line(0), 2, {1: 3}, {2: 1})
    with pytest.raises(ValueError):
        smpc.Layout(mbqc.two_line(0), 2, {}, {2: 1})
    with pytest.raises(ValueError):
        smpc.Layout(mbqc.two_line(0), 2, {1: 1}, {2: 1}, output_mode="bits")
    with pytest.raises(ValueError):
        smpc.Layout(mbqc.two_line(0), 2, {1: 1}, {2: 1}, gadget_name="nope")


def test_location_owner():
    top = LAYOUT.template.top_input
    assert LAYOUT.location_owner(vbqc.primary(1, 0), top) == 1
    assert LAYOUT.location_owner(vbqc.primary(2, 0), top) == 2
    assert all(LAYOUT.location_owner(vbqc.primary(1, 0), loc) == 2 for loc in LAYOUT.locations if loc != top)


def test_state_is_write_once():
    st = smpc.SmpcState()
    st.set("colouring", 1)
    with pytest.raises(smpc.SmpcError):
        st.set("colouring", 2)
    with pytest.raises(KeyError):
        st.set("bogus", 1)
    with pytest.raises(smpc.SmpcError):
        st.get("verdict")


# -- setup ------------------------------------------------------------------------


def test_calls_before_setup_fail(rng):
    f = smpc.SmpcFunctionality(LAYOUT, rng)
    with pytest.raises(smpc.SmpcError):
        f.orchestrate_dbqc({})
    with pytest.raises(smpc.SmpcError):
        f.key_release()


def test_setup_rejects_bad_submissions(rng):
    f = smpc.SmpcFunctionality(LAYOUT, rng)
    subs = submissions(LAYOUT, rng)
    with pytest.raises(smpc.SmpcError):
        f.init({1: subs[1]})
    subs[2]["inputs"] = {1: {"position": 0, "a": 0}}
    with pytest.raises(smpc.SmpcError):
        f.init(subs)
    subs = submissions(LAYOUT, rng, {1: 0})
    subs[1]["inputs"][1]["position"] = 5
    with pytest.raises(smpc.SmpcError):
        f.init(subs)


@pytest.mark.parametrize("position", [0, 1, 2])
def test_colouring_respects_input_position(position, rng):
    for _ in range(10):
        f = ready(rng, {1: position})
        col = f.state.get("colouring")
        assert col.computation_position(1) == position
        assert vbqc.validate_colouring(LAYOUT.dt, col.roles(LAYOUT.dt)) == []


def test_gadget_choice_marks_exactly_the_dummies(rng):
    f = ready(rng)
    col = f.state.get("colouring")
    choice = f.state.get("gadget_choice")
    assert set(choice) == set(LAYOUT.dt.vertices)
    assert sum(choice.values()) == sum(col.role(x) == vbqc.DUMMY for x in LAYOUT.dt.vertices)
    for s in LAYOUT.dt.primary_sets.values():
        assert sum(col.role(x) == vbqc.DUMMY for x in s) == 1


def test_fixed_colouring_must_match_positions(rng):
    col = vbqc.sample_colouring(LAYOUT.dt, rng, {1: 0})
    f = smpc.SmpcFunctionality(LAYOUT, rng, fixed_colouring=col)
    with pytest.raises(smpc.SmpcError):
        f.init(submissions(LAYOUT, rng, {1: 1}))
    f = smpc.SmpcFunctionality(LAYOUT, rng, fixed_colouring=col)
    f.init(submissions(LAYOUT, rng, {1: 0}))
    assert f.state.get("colouring") is col


def test_gadget_angle_stream_is_uniform(rng):
    counts = Counter()
    for _ in range(40):
        f = ready(rng)
        for deltas in f.orchestrate_dbqc(random_t_bits(LAYOUT, rng)).values():
            counts.update(deltas.values())
    total = sum(counts.values())
    assert set(counts) == set(range(8))
    # loose band: +-25% around 1/8 with several thousand samples
    assert all(abs(c / total - 1 / 8) < 1 / 32 for c in counts.values())


def test_gadget_angles_replay_deterministically():
    t = random_t_bits(LAYOUT, np.random.default_rng(9))
    a = ready(np.random.default_rng(5)).orchestrate_dbqc(t)
    b = ready(np.random.default_rng(5)).orchestrate_dbqc(t)
    assert a == b


def test_duplicate_submission_aborts(rng):
    f = smpc.SmpcFunctionality(LAYOUT, rng)
    msg = Message("client1", smpc.SMPC, "secure", "setup", {"call": "setup"})
    f.receive(msg, None)
    with pytest.raises(ProtocolAbort):
        f.receive(msg, None)


def test_message_without_call_is_rejected(rng):
    f = smpc.SmpcFunctionality(LAYOUT, rng)
    with pytest.raises(smpc.SmpcError):
        f.receive(Message("client1", smpc.SMPC, "secure", "setup", {}), None)


# -- whole-protocol behaviour ---------------------------------------------------------


def test_bridge_outcome_updates_later_angle():
    w = run_sample(dmpqc.parallel_lines_scenario([1, 2], seed=3))
    f = w.parties[smpc.SMPC]
    session = f.state.get("session")
    assert session.bridge_middles
    for m in session.bridge_middles:
        assert m in f._reports


def test_keys_only_after_passing_verdict():
    w = run_sample(dmpqc.two_line_scenario(1, seed=11))
    entries = w.transcript.entries
    verdicts = [e["seq"] for e in entries if e["kind"] == "verdict" and e["sender"] == smpc.SMPC]
    keys = [e for e in entries if e["kind"] == "keys"]
    assert keys and verdicts
    assert all(e["seq"] > max(verdicts) for e in keys)
    assert all(e["channel"] == "secure" for e in keys)
    f = w.parties[smpc.SMPC]
    assert f.state.get("verdict")["ok"]
    assert f.calls[-1] == "keys"


def test_classical_mode_releases_bits_not_keys():
    w = run_sample(dmpqc.two_line_scenario(1, output_mode="classical", seed=4))
    f = w.parties[smpc.SMPC]
    assert f.calls[-2:] == ["verify", "bits"]
    assert w.transcript.count(kind="keys") == 0
    assert w.transcript.count(kind="bits") == 1


def test_flipped_client_trap_aborts_everyone():
    cfg = dmpqc.two_line_scenario(1, seed=8, clients={2: adversary.TrapFlipClient()})
    w = run_sample(cfg)
    f = w.parties[smpc.SMPC]
    assert not f.state.get("verdict")["ok"]
    assert all(r.abort for r in f.key_release())
    for j in (1, 2):
        assert w.parties[smpc.client_name(j)].outcome == "abort"
    assert w.transcript.count(kind="keys") == 0


def test_release_order_puts_listed_clients_first():
    cfg = dmpqc.parallel_lines_scenario([0, 0], seed=2, malicious=[2])
    w = run_sample(cfg)
    rel = w.parties[smpc.SMPC].key_release()
    assert [r.client for r in rel] == [2, 1]
