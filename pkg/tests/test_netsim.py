from __future__ import annotations

from pathlib import Path

import pytest

from conftest import ALICE, BOB
from magiq.asession import HS_INIT, TASK_REQ, TASK_RESP
from magiq.attacks import base_scenario
from magiq.encoding import decode, encode
from magiq.errors import ScenarioParseError, UnknownIdentity
from magiq.netsim import (Action, SecureChannel, SessionStep, SimClock, frame_fields, get_field,
                          load_scenario, measure_bandwidth, mutate_frame, parse_action,
                          parse_scenario, replace_field, run_scenario)

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def test_clock_only_moves_forward():
    c = SimClock()
    assert c.advance(3) == 3 and c.read() == 3
    with pytest.raises(ValueError):
        c.advance(0)


def test_secure_channel_is_fifo_per_direction():
    ch = SecureChannel("a", "b")
    ch.send("a", b"1")
    ch.send("a", b"2")
    ch.send("b", b"x")
    assert ch.recv("b") == b"1" and ch.recv("b") == b"2" and ch.recv("b") is None
    assert ch.recv("a") == b"x"
    with pytest.raises(UnknownIdentity):
        ch.send("c", b"")


def test_parse_action_forms():
    assert parse_action(["drop"]) == Action("drop")
    assert parse_action(["delay", "4"]).k == 4
    assert parse_action(["mutate", "2.1", "00ff"]) == Action("mutate", path=(2, 1),
                                                              data=b"\x00\xff")
    with pytest.raises(ScenarioParseError):
        parse_action(["teleport"])
    with pytest.raises(ScenarioParseError):
        parse_action(["delay"])


def test_field_paths_and_replacement():
    frame = b"\x12" + encode(b"a", encode(b"b", b"c"))
    assert frame_fields(frame, depth=2) == [(0,), (1,), (1, 0), (1, 1)]
    assert get_field(frame, (1, 1)) == b"c"
    out = mutate_frame(frame, (1, 0), b"Z")
    assert get_field(out, (1, 0)) == b"Z" and out[0] == 0x12
    assert decode(replace_field(frame[1:], (0,), b"q"))[0] == b"q"


def run(sc):
    return run_scenario(sc)


def test_honest_run_has_no_rejections():
    r = run(base_scenario(3))
    assert not r.aborts()
    assert r.sessions[0].executed == 3
    tags = [m.tag for m in r.messages if m.src == ALICE or m.dst == ALICE]
    assert HS_INIT in tags and tags.count(TASK_REQ) == 2


def test_honest_endpoints_leak_only_lengths():
    r = run(base_scenario(3))
    assert all(len(o) == 6 for o in r.observations)
    r2 = run(base_scenario(3, corrupt={BOB}))
    bob_rows = [o for o in r2.observations if BOB in (o[2], o[3])]
    assert bob_rows and all(len(o) == 7 for o in bob_rows)


def test_mutation_by_honest_sender_is_refused_and_logged():
    base = run(base_scenario(3))
    idx = next(m.idx for m in base.messages if m.tag == TASK_REQ)
    r = run(base_scenario(3, adversary={idx: [Action("mutate", path=(1,), data=b"x")]}))
    assert not r.aborts()
    assert any("refused mutate" in str(o[-1]) for o in r.observations)


def test_drop_stalls_without_blame():
    base = run(base_scenario(3))
    idx = next(m.idx for m in base.messages if m.tag == TASK_RESP)
    r = run(base_scenario(3, adversary={idx: [Action("drop")]}))
    assert r.messages[idx].fate == "dropped"
    assert not [e for e in r.events if e.accountable]


def test_corrupted_mutation_is_blamed_on_sender():
    base = run(base_scenario(3))
    idx = next(m.idx for m in base.messages if m.tag == TASK_REQ)
    r = run(base_scenario(3, corrupt={ALICE},
                          adversary={idx: [Action("mutate", path=(1,), data=b"evil")]}))
    assert r.messages[idx].fate == "modified"
    assert {e.accountable for e in r.aborts() if e.entity == BOB} == {"initiator"}


def test_parse_scenario_errors():
    with pytest.raises(ScenarioParseError, match="line 1"):
        parse_scenario("bogus line")
    with pytest.raises(ScenarioParseError, match="line 2"):
        parse_scenario("seed 1\nsession a -> b q=x")
    with pytest.raises(ScenarioParseError):
        parse_scenario("session a -> b colour=red")


def test_session_requests_default_to_q():
    sc = parse_scenario(f"session {ALICE} -> {BOB} q=4")
    assert sc.steps[0] == SessionStep(ALICE, BOB, 4, 100, 4, "task", "task", 0, 0, 0, False)


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.scn")), ids=lambda p: p.stem)
def test_shipped_scenarios_run(path):
    r = run_scenario(load_scenario(path))
    assert r.messages
    assert r.summary().startswith(f"scenario {path.stem}")


def test_report_write(tmp_path):
    r = run(base_scenario(2))
    r.write(tmp_path / "r.log")
    assert (tmp_path / "r.log").read_bytes() == r.log_bytes()


TEN_ROUNDS = f"""
seed 3
heights ca=4 user=4 agent=3 provider=6
user alice@a.org
user bob@b.org
agent {ALICE} sim://a rules "send * 2"
agent {BOB} sim://b rules "receive * 2;rcp {BOB} * 10 50"
session {ALICE} -> {BOB} q=10 delta=50 payload=p
"""


def test_bandwidth_per_request_is_constant():
    report = run(parse_scenario(TEN_ROUNDS))
    bw = measure_bandwidth(report)
    rounds = bw.per_request[0]
    # request 1 rides in the handshake, so rounds 2..10 are the per-request rows
    assert len(rounds) == 9 and len(set(rounds)) == 1
    assert bw.per_session_establishment[0] > 10 * rounds[0]
    assert sum(bw.phases.values()) == sum(len(m.data) for m in report.messages)


def test_empty_payload_gives_framing_floor():
    sc = base_scenario(3, steps=[SessionStep(ALICE, BOB, 3, 20, 3, payload="")])
    sc2 = base_scenario(3, steps=[SessionStep(ALICE, BOB, 3, 20, 3, payload="abcd")])
    a = measure_bandwidth(run(sc)).per_request[0][0]
    b = measure_bandwidth(run(sc2)).per_request[0][0]
    assert b - a == 2 * 4  # the payload travels out in the request and back in the response
