from __future__ import annotations

import threading

import pytest

from conftest import ALICE, BOB, CAROL
from magiq.asession import NonceRegistry, session_id, verify_commitment
from magiq.attacks import ConservationRow, conservation_rows, csession_scenario
from magiq.csession import (authorize_chain_dynamic, commit_static, delegate_dynamic,
                            last_response_router, new_csession, open_component_session,
                            plan_static, respond_component)
from magiq.errors import (BadProof, ChainsExhausted, GlobalExpired, GlobalQuotaExhausted,
                          NoChainLeft, PreconditionError)
from magiq.netsim import CSessionStep, World
from magiq.policy import InitiatorPolicy

ICP = InitiatorPolicy(ALICE, 6, 100, 2, 3)


def test_static_commitment_covers_every_chain(world):
    alice = world.runtimes[ALICE].agent
    plan = plan_static(b"task", [BOB, CAROL], ICP)
    sc = commit_static(plan, alice, rng=world.rng)
    for aid in (BOB, CAROL):
        chains, c = sc.component(aid)
        assert len(chains) == 1 and c.capacity == 3
        verify_commitment(c, alice.owner.pk, "initiator")
    assert len(sc.tree.leaves) == 2


def test_static_plan_lists_each_responder_once():
    with pytest.raises(PreconditionError):
        plan_static(b"t", [BOB, BOB], ICP)


def test_static_component_cannot_be_opened_twice(world):
    alice = world.runtimes[ALICE].agent
    sc = commit_static(plan_static(b"task", [BOB], ICP), alice, rng=world.rng)
    sc.opened.add(BOB)
    with pytest.raises(NoChainLeft):
        sc.component(BOB)
    with pytest.raises(NoChainLeft):
        sc.component(CAROL)


def test_dynamic_keys_are_used_once_each(world):
    alice = world.runtimes[ALICE].agent
    dc = delegate_dynamic(2, 3, alice.owner, q_tot=6, rng=world.rng)
    seen = set()
    for i in range(2):
        chain, c = authorize_chain_dynamic(dc, alice, BOB, bytes([i]) * 32)
        verify_commitment(c, alice.owner.pk, "initiator", seen, ots_scope=b"x")
    with pytest.raises(ChainsExhausted):
        authorize_chain_dynamic(dc, alice, BOB, b"\x09" * 32)


def test_dynamic_key_reuse_is_detected(world):
    alice = world.runtimes[ALICE].agent
    bob = world.runtimes[BOB].agent
    dc = delegate_dynamic(2, 3, alice.owner, rng=world.rng)
    cstate = new_csession(ALICE, ICP, world.clock)
    nonces = NonceRegistry()
    seen: set = set()
    for k in range(2):
        dc.used_index = 0
        dc.ots_batch[0].used = False  # a cheating orchestrator rewinds its key state
        auth = world.provider.discover(ALICE, BOB)
        nonce = bytes([k]) * 16
        sid = session_id(b"t", ALICE, BOB, nonce)
        chain, c = authorize_chain_dynamic(dc, alice, BOB, sid)
        m0, _ = open_component_session(cstate, alice, auth, [chain], c, world.clock,
                                       task_digest=b"t", nonce=nonce, rng=world.rng)
        if k == 0:
            respond_component(bob, m0, None, world.clock, world.anchors, nonces, seen_ots=seen,
                              rng=world.rng)
        else:
            with pytest.raises(BadProof) as ei:
                respond_component(bob, m0, None, world.clock, world.anchors, nonces,
                                  seen_ots=seen, rng=world.rng)
            assert ei.value.accountable == "initiator"


def test_delegation_requires_matching_budget(world):
    with pytest.raises(PreconditionError):
        delegate_dynamic(2, 3, world.users["alice@a.org"], q_tot=5)


def test_global_counter_is_atomic():
    cstate = new_csession(ALICE, ICP, 0)
    hits = []

    def worker():
        for _ in range(5):
            try:
                cstate.reserve(0)
                hits.append(1)
            except GlobalQuotaExhausted:
                pass

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(hits) == 6 and cstate.ctr_global == 6


def test_global_deadline_is_enforced():
    cstate = new_csession(ALICE, ICP, 10)
    assert cstate.t_exp_global == 110
    cstate.check_time(110)
    with pytest.raises(GlobalExpired):
        cstate.check_time(111)


def test_q_tot_cap_bounds():
    assert new_csession(ALICE, ICP, 0, q_tot=4).q_tot == 4
    with pytest.raises(PreconditionError):
        new_csession(ALICE, ICP, 0, q_tot=7)


def test_component_deadline_is_clamped_to_global_window(world):
    alice = world.runtimes[ALICE].agent
    cstate = new_csession(ALICE, ICP, world.clock)
    world.clock.advance(95)
    sc = commit_static(plan_static(b"task", [BOB], ICP), alice, rng=world.rng)
    chains, c = sc.component(BOB)
    auth = world.provider.discover(ALICE, BOB)
    m0, state = open_component_session(cstate, alice, auth, chains, c, world.clock,
                                       task_digest=b"task", nonce=sc.nonces[BOB], rng=world.rng)
    assert m0.delta == 5 and state.t_exp == cstate.t_exp_global


def test_router_is_deterministic():
    pick = last_response_router([BOB, CAROL], 3)
    assert pick(None, 0) == BOB
    assert pick(b"\x01", 1) == CAROL
    assert pick(b"\x02", 2) == BOB
    assert pick(b"\x02", 3) is None


@pytest.mark.parametrize("mode", ["static", "dynamic"])
def test_simulated_csession_spends_exactly_the_budget(mode):
    w = World(csession_scenario(2, 3, [CSessionStep(ALICE, mode, [BOB, CAROL], 7, picks=2)]))
    w.setup()
    w.run_step(w.sc.steps[0])
    res = w.csessions[0]
    assert res.ctr_global == res.consumed == 6
    assert w.runtimes[BOB].executed + w.runtimes[CAROL].executed == 6
    assert not [e for e in w.net.events if e.accountable]


@pytest.mark.parametrize("mn", [(2, 2), (4, 3), (1, 5)])
def test_conservation_rows(mn):
    for row in conservation_rows(*mn):
        r = row()
        assert isinstance(r, ConservationRow)
        assert r.passed, r
