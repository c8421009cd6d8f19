from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from magiq.errors import MalformedAid, PolicyParseError, PreconditionError, TooManyResponders
from magiq.policy import (NO_MATCH, RECEIVE, SEND, ContactPolicy, ContactRule, InitiatorPolicy,
                          ResponderPolicy, Specificity, budget, effective_session_policy,
                          match_rcp, match_rule, parse_aid, parse_policy_text, pattern_class,
                          resolve_budget, split_icp, uid_of)

ALICE = "alice@a.org:ai"
BOB = "bob@b.org:sched"


def cp(*rules):
    return ContactPolicy(tuple(ContactRule(*r) for r in rules))


def test_parse_aid_and_uid():
    assert parse_aid(ALICE) == ("alice", "a.org", "ai")
    assert uid_of(BOB) == "bob@b.org"
    for bad in ("alice", "alice@a.org", "@a.org:x", "a@b:c:d"):
        with pytest.raises(MalformedAid):
            parse_aid(bad)


def test_pattern_classes():
    assert pattern_class("*") is Specificity.GLOBAL
    assert pattern_class("*@b.org:sched") is Specificity.DOMAIN
    assert pattern_class(BOB) is Specificity.EXACT
    with pytest.raises(PolicyParseError):
        pattern_class("bob@*")


def test_most_specific_rule_wins_regardless_of_order():
    p = cp((SEND, "*", 1), (SEND, "*@b.org:sched", 2), (SEND, BOB, 5))
    assert match_rule(p, SEND, BOB).budget == 5
    assert budget(p, SEND, "carol@b.org:sched") == 2
    assert budget(p, SEND, "carol@c.org:bot") == 1
    reversed_p = ContactPolicy(tuple(reversed(p.rules)))
    assert budget(reversed_p, SEND, BOB) == 5


def test_first_declared_wins_among_equals():
    p = cp((RECEIVE, "*", 4), (RECEIVE, "*", 9))
    assert budget(p, RECEIVE, ALICE) == 4


def test_resolve_budget_is_min_and_needs_both_sides():
    r = cp((RECEIVE, ALICE, 3))
    i = cp((SEND, BOB, 5))
    assert resolve_budget(r, i, BOB, ALICE) == 3
    assert resolve_budget(r, cp(), BOB, ALICE) == NO_MATCH
    assert resolve_budget(cp((RECEIVE, "*", 0)), i, BOB, ALICE) == 0


@given(st.integers(0, 50), st.integers(0, 50))
def test_resolve_budget_property(a, b):
    assert resolve_budget(cp((RECEIVE, "*", a)), cp((SEND, "*", b)), BOB, ALICE) == min(a, b)


def test_effective_session_policy():
    assert effective_session_policy(5, 100, 3, 40) == (3, 40)
    with pytest.raises(PreconditionError):
        effective_session_policy(0, 1, 1, 1)


def test_match_rcp_prefers_exact():
    entries = [ResponderPolicy(BOB, "*", 5, 40), ResponderPolicy(BOB, ALICE, 2, 10)]
    assert match_rcp(entries, BOB, ALICE).q == 2
    assert match_rcp(entries, BOB, "carol@c.org:bot").q == 5
    assert match_rcp(entries, "x@y.org:z", ALICE) is None


def test_icp_requires_q_tot_equal_m_times_n():
    InitiatorPolicy(ALICE, 6, 100, 2, 3)
    with pytest.raises(PolicyParseError):
        InitiatorPolicy(ALICE, 7, 100, 2, 3)


def test_split_icp_round_robin():
    icp = InitiatorPolicy(ALICE, 12, 100, 4, 3)
    slots = split_icp(icp, 3)
    assert [s.chains for s in slots] == [(0, 3), (1,), (2,)]
    assert sum(s.tokens for s in slots) == 12
    with pytest.raises(TooManyResponders):
        split_icp(icp, 5)


def test_parse_policy_text():
    pf = parse_policy_text("""
        # comment
        send bob@b.org:sched 5
        receive * 0
        rcp bob@b.org:sched * 5 40
        icp alice@a.org:ai 6 100 2 3
    """)
    assert len(pf.cp.rules) == 2
    assert pf.rcp[0].delta == 40 and pf.icp[0].chain_len == 3
    assert ContactPolicy.decode(pf.cp.encode()) == pf.cp


@pytest.mark.parametrize("text", ["send bob@b.org:sched", "allow * 1", "send * -1",
                                  "rcp bob * 1 1", "icp alice@a.org:ai 5 1 2 3",
                                  "send * x"])
def test_parse_policy_errors(text):
    with pytest.raises(PolicyParseError):
        parse_policy_text(text)
