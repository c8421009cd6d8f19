from __future__ import annotations

from dataclasses import replace

import pytest

from conftest import ALICE, BOB, open_pair
from magiq.asession import (INITIATOR, RESPONDER, TASK_REQ, HandshakeInit, NonceRegistry,
                            Status, TaskMsg,
                            TerminalMsg, audit_transcript, close, export_transcript,
                            handle_request, handle_response, load_transcript,
                            parse_session_frame, respond, send_request, session_id)
from magiq.crypto.chain import NextTok
from magiq.crypto.hashing import hmac
from magiq.errors import (BadTag, BadToken, Expired, InvalidState, MalformedMessage,
                          OwnBudgetExhausted, PeerAborted, ProtocolError, QuotaExhausted,
                          ReplayedNonce, SessionExpired)
from magiq.netsim import SessionStep
from magiq.policy import ResponderPolicy


def round_trip(p, payload=b"r"):
    req = send_request(p.init, payload, p.clock)
    resp = handle_request(p.resp, req, p.clock)
    return handle_response(p.init, resp, p.clock)


def test_handshake_opens_both_sides(pair):
    assert pair.init.status == pair.resp.status == Status.OPEN
    assert pair.init.k_ses == pair.resp.k_ses
    assert pair.init.sid == pair.resp.sid == pair.m0.sid
    assert pair.resp.requests_executed == 1
    assert pair.init.ctr_own == 2 and pair.resp.ctr_peer == 2
    assert pair.init.ctr_peer == pair.resp.ctr_own == 2


def test_sid_binds_task_parties_and_nonce():
    base = session_id(b"t", ALICE, BOB, b"n" * 16)
    assert base != session_id(b"u", ALICE, BOB, b"n" * 16)
    assert base != session_id(b"t", BOB, ALICE, b"n" * 16)
    assert base != session_id(b"t", ALICE, BOB, b"m" * 16)


def test_full_budget_then_initiator_stops(pair):
    for i in range(2):
        assert round_trip(pair, b"x%d" % i) == b"x%d" % i
    assert pair.resp.requests_executed == 3
    assert pair.init.ctr_own == 0
    with pytest.raises(OwnBudgetExhausted):
        send_request(pair.init, b"extra", pair.clock)
    assert pair.init.status == Status.EXHAUSTED


def test_responder_refuses_request_beyond_budget(pair):
    for _ in range(2):
        round_trip(pair)
    # a misbehaving initiator replays its last request after the budget is spent
    last = TaskMsg(pair.init.sid, TASK_REQ, b"more", NextTok(0, pair.init.own.last_value),
                   pair.init.peer.head)
    last = replace(last, tag=hmac(pair.init.k_ses, last.mac_input()))
    with pytest.raises(QuotaExhausted) as ei:
        handle_request(pair.resp, last, pair.clock)
    assert ei.value.accountable == INITIATOR
    notice = ei.value.info["notice"]
    assert isinstance(notice, TerminalMsg)
    assert pair.resp.requests_executed == 3


def test_tampered_request_tag_blames_initiator(pair):
    req = send_request(pair.init, b"r", pair.clock)
    bad = replace(req, payload=b"R")
    with pytest.raises(BadTag) as ei:
        handle_request(pair.resp, bad, pair.clock)
    assert ei.value.accountable == INITIATOR
    assert pair.resp.status == Status.ABORTED
    assert pair.resp.requests_executed == 1


def test_wrong_echo_blames_initiator(pair):
    req = send_request(pair.init, b"r", pair.clock)
    bad = replace(req, tok_peer_echo=b"\x00" * 32)
    bad = replace(bad, tag=hmac(pair.init.k_ses, bad.mac_input()))
    with pytest.raises(BadToken):
        handle_request(pair.resp, bad, pair.clock)


def test_tampered_response_blames_responder(pair):
    req = send_request(pair.init, b"r", pair.clock)
    resp = handle_request(pair.resp, req, pair.clock)
    with pytest.raises(BadTag) as ei:
        handle_response(pair.init, replace(resp, payload=b"forged"), pair.clock)
    assert ei.value.accountable == RESPONDER


def test_one_request_in_flight(pair):
    send_request(pair.init, b"a", pair.clock)
    with pytest.raises(InvalidState):
        send_request(pair.init, b"b", pair.clock)


def test_expiry_is_inclusive(world):
    p = open_pair(world, q=3, delta=5)
    p.clock.advance(5)
    round_trip(p)  # exactly at t_exp is still allowed
    p.clock.advance(1)
    with pytest.raises(Expired):
        send_request(p.init, b"late", p.clock)
    assert p.init.status == Status.EXPIRED


def test_responder_expiry_blames_nobody(world):
    p = open_pair(world, q=3, delta=5)
    req = send_request(p.init, b"r", p.clock)
    p.clock.advance(6)
    with pytest.raises(SessionExpired) as ei:
        handle_request(p.resp, req, p.clock)
    assert ei.value.accountable is None
    with pytest.raises(PeerAborted):
        handle_response(p.init, ei.value.info["notice"], p.clock)
    assert p.init.status == Status.EXPIRED


def test_rcp_lowers_budget(world):
    p = open_pair(world, q=5, rcp=ResponderPolicy(BOB, "*", 2, 40))
    assert p.resp.q == 2 and p.init.ctr_peer == 1
    round_trip(p)
    assert p.init.ctr_peer == 0


def test_replayed_handshake_is_refused(pair):
    with pytest.raises(ReplayedNonce) as ei:
        respond(pair.world.runtimes[BOB].agent, pair.m0, None, pair.clock, pair.world.anchors,
                pair.nonces)
    assert ei.value.accountable == INITIATOR


def test_handshake_field_mutation_is_refused(world):
    p = open_pair(world, accept=False)
    bob = world.runtimes[BOB].agent
    for field, value in (("q", 4), ("delta", 99), ("payload", b"other"), ("r1", b"\x01" * 32)):
        m0 = replace(p.m0, **{field: value})
        with pytest.raises(ProtocolError) as ei:
            respond(bob, m0, None, world.clock, world.anchors, NonceRegistry())
        assert ei.value.accountable == INITIATOR


def test_frame_roundtrip(pair):
    frame = pair.m0.to_frame()
    back = parse_session_frame(frame, INITIATOR)
    assert isinstance(back, HandshakeInit) and back.sid == pair.m0.sid
    with pytest.raises(MalformedMessage):
        parse_session_frame(frame[:-5], INITIATOR)
    with pytest.raises(MalformedMessage):
        parse_session_frame(b"\x7f" + frame[1:], INITIATOR)


def test_revealed_links_are_forgotten(pair):
    (addr, kept), = pair.init.retained_preimages()
    assert addr == 0 and max(kept) < 3
    round_trip(pair)
    (_, kept2), = pair.init.retained_preimages()
    assert max(kept2) < max(kept)


def test_close_summary_and_transcript_audit(world, tmp_path):
    w = world
    w.run_step(SessionStep(ALICE, BOB, 3, 20, 3, payload="job"))
    rec = w.sessions[0]
    assert rec.initiator_summary.own_tokens_used == 3
    assert rec.responder_summary.requests == 3
    frames = w.runtimes[BOB].transcripts[bytes.fromhex(rec.sid)]
    path = tmp_path / "t.log"
    export_transcript(frames, path)
    assert load_transcript(path) == frames
    audit = audit_transcript(frames)
    assert audit.ok and audit.requests == 3 and audit.responses == 3
    tampered = list(frames)
    tampered[0] = tampered[0][:-40] + bytes(40)
    assert not audit_transcript(tampered).ok


def test_close_is_terminal(pair):
    s = close(pair.init)
    assert s.cause == "closed" and s.own_tokens_used == 1
    with pytest.raises(InvalidState):
        send_request(pair.init, b"x", pair.clock)
