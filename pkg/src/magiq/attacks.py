"""Scripted-adversary matrix over the simulator.

Every row runs a fresh, seeded world with one misbehaviour and checks three
things at the honest party: the misbehaviour was rejected, every rejection
names the expected role, and no more than ``Q`` requests were executed or
tokens revealed.  The all-honest baseline must see no rejection at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

from .asession import (HS_INIT, HS_RESP, INITIATOR, RESPONDER, TASK_REQ, TASK_RESP, initiate)
from .encoding import encode
from .errors import BadCertificate, DuplicateAid, DuplicateUid, MagiqError, UnknownAgent
from .netsim import (Action, AgentDecl, CSessionStep, Scenario, SessionStep, World,
                     frame_fields, get_field)
from .policy import InitiatorPolicy, parse_policy_text

ALICE = "alice@a.org:ai"
BOB = "bob@b.org:sched"
CAROL = "carol@c.org:bot"
USER = "user"  # the registering principal, for registry-level rows

FAST_HEIGHTS = {"ca": 4, "user": 4, "agent": 3, "provider": 6}

_POLICIES = {
    ALICE: "send bob@b.org:sched 5\nreceive *@b.org:sched 2\nicp alice@a.org:ai 6 100 2 3",
    BOB: "receive alice@a.org:ai 4\nreceive *@c.org:bot 1\nsend * 1\nrcp bob@b.org:sched * 5 40",
    CAROL: "send * 2\nreceive * 0",
}

SESSION_DELTA = 20


@dataclass(frozen=True)
class AttackRow:
    name: str
    category: str
    q: int
    expected: str | None
    observed: tuple[str, ...]
    executed: int
    revealed: int
    passed: bool
    detail: str = ""

    def csv(self) -> str:
        return ",".join([self.name, self.category, str(self.q), self.expected or "-",
                         "|".join(self.observed) or "-", str(self.executed), str(self.revealed),
                         "pass" if self.passed else "FAIL"])


CSV_HEADER = "name,category,q,expected,observed,executed,revealed,result"


def base_scenario(q: int, *, corrupt=(), seed: int = 11, steps=None, adversary=None) -> Scenario:
    agents = [AgentDecl(aid, f"sim://{aid}", parse_policy_text(_POLICIES[aid]))
              for aid in (ALICE, BOB, CAROL)]
    if steps is None:
        steps = [SessionStep(ALICE, BOB, q, SESSION_DELTA, q, payload="job")]
    return Scenario(name=f"matrix-q{q}", seed=seed, heights=dict(FAST_HEIGHTS),
                    users=["alice@a.org", "bob@b.org", "carol@c.org"], agents=agents,
                    corrupt=set(corrupt), steps=list(steps), adversary=dict(adversary or {}))


def run_world(sc: Scenario) -> World:
    w = World(sc)
    w.setup()
    for st in sc.steps:
        w.run_step(st)
    return w


def _rejections(w: World, entity: str) -> list:
    return [e for e in w.net.events if e.entity == entity and e.accountable is not None]


def _counts(w: World) -> tuple[int, int]:
    """(requests executed by bob, tokens revealed by alice) over the whole run."""
    executed = w.runtimes[BOB].executed
    revealed = 0
    for s in w.sessions:
        if s.initiator_summary is not None:
            revealed += s.initiator_summary.own_tokens_used
    for c in w.csessions:
        revealed += c.consumed
    return executed, revealed


def _judge(name, category, q, w: World, victim: str, expected: str | None, *,
           budget: int | None = None, detail: str = "") -> AttackRow:
    """``expected=None`` means an honest run: nobody anywhere may be blamed."""
    rej = _rejections(w, victim)
    observed = tuple(sorted({e.accountable for e in rej}))
    executed, revealed = _counts(w)
    budget = q if budget is None else budget
    conserved = executed <= budget and revealed <= budget
    if expected is None:
        ok = not any(e.accountable for e in w.net.events)
    else:
        ok = bool(rej) and observed == (expected,)
    if not detail:
        detail = "; ".join(f"{e.entity}:{e.detail}" for e in rej[:2])
    return AttackRow(name, category, q, expected, observed, executed, revealed,
                     ok and conserved, detail)


def _flip(b: bytes) -> bytes:
    return b[:-1] + bytes([b[-1] ^ 0x01]) if b else b"\x01"


def _first(w: World, tag: int, nth: int = 1) -> int:
    seen = 0
    for m in w.net.messages:
        if m.tag == tag and m.origin == "sent":
            seen += 1
            if seen == nth:
                return m.idx
    raise LookupError(f"no message with tag {tag:#x}")


_TOKEN_FIELD = {HS_INIT: 4, HS_RESP: 4, TASK_REQ: 2, TASK_RESP: 2}
_LABEL = {HS_INIT: "m0", HS_RESP: "m1", TASK_REQ: "req2", TASK_RESP: "resp2"}


def mutation_paths(data: bytes) -> list[tuple[int, ...]]:
    """Every top-level field plus the three parts of the carried token."""
    paths = frame_fields(data, depth=1)
    tf = _TOKEN_FIELD[data[0]]
    paths += [(tf, j) for j in range(3)]
    return paths


def matrix_rows(q: int = 3, seed: int = 11) -> list[Callable[[], AttackRow]]:
    """Row thunks for budget ``q``; enumerating is cheap, running is not."""
    base = run_world(base_scenario(q, seed=seed))
    rows: list[Callable[[], AttackRow]] = []

    def baseline() -> AttackRow:
        w = run_world(base_scenario(q, seed=seed))
        row = _judge("baseline", "honest", q, w, BOB, None)
        s = w.sessions[0]
        ok = (row.passed and s.executed == q and s.initiator_summary.requests == q)
        return replace(row, passed=ok)

    rows.append(baseline)

    tags = [HS_INIT, HS_RESP] + ([TASK_REQ, TASK_RESP] if q >= 2 else [])
    for tag in tags:
        idx = _first(base, tag)
        data = base.net.messages[idx].data
        sender_is_init = tag in (HS_INIT, TASK_REQ)
        culprit = ALICE if sender_is_init else BOB
        victim = BOB if sender_is_init else ALICE
        role = INITIATOR if sender_is_init else RESPONDER
        for path in mutation_paths(data):
            new = _flip(get_field(data, path))
            label = f"mutate-{_LABEL[tag]}-{'.'.join(map(str, path))}"

            def run(path=path, new=new, idx=idx, culprit=culprit, victim=victim, role=role,
                    label=label):
                adv = {idx: [Action("mutate", path=path, data=new)]}
                w = run_world(base_scenario(q, seed=seed, corrupt={culprit}, adversary=adv))
                return _judge(label, "mutation", q, w, victim, role)

            rows.append(run)

    for tag in tags:
        idx = _first(base, tag)
        sender_is_init = tag in (HS_INIT, TASK_REQ)

        def run(idx=idx, tag=tag, sender_is_init=sender_is_init):
            adv = {idx: [Action("replay", k=idx)]}
            w = run_world(base_scenario(q, seed=seed, adversary=adv))
            victim = BOB if sender_is_init else ALICE
            return _judge(f"replay-{_LABEL[tag]}", "replay", q, w, victim,
                          INITIATOR if sender_is_init else RESPONDER)

        rows.append(run)

    if q >= 3:
        def reorder_initiator():
            st = SessionStep(ALICE, BOB, q, SESSION_DELTA, q, payload="job", skip=2)
            w = run_world(base_scenario(q, seed=seed, corrupt={ALICE}, steps=[st]))
            return _judge("reorder-initiator-token", "reorder", q, w, BOB, INITIATOR)

        def reorder_responder():
            w = World(base_scenario(q, seed=seed, corrupt={BOB}))
            w.setup()
            w.runtimes[BOB].skip_rounds = {2}
            for st in w.sc.steps:
                w.run_step(st)
            return _judge("reorder-responder-token", "reorder", q, w, ALICE, RESPONDER)

        def expiry_network_delay():
            idx = _first(base, TASK_REQ)
            adv = {idx: [Action("delay", k=SESSION_DELTA + 1)]}
            w = run_world(base_scenario(q, seed=seed, adversary=adv))
            expired = [e for e in w.net.events if e.entity == BOB and e.kind == "expired"]
            executed, revealed = _counts(w)
            ok = bool(expired) and executed == 1 and not _rejections(w, BOB)
            return AttackRow("expiry-delayed-request", "expiry", q, None, (), executed,
                             revealed, ok, "responder refused a request after its deadline")

        rows += [reorder_initiator, reorder_responder, expiry_network_delay]

    def expiry_local():
        st = SessionStep(ALICE, BOB, q, 2, q + 1, payload="job", gap=3)
        w = run_world(base_scenario(q, seed=seed, steps=[st]))
        executed, revealed = _counts(w)
        local = [e for e in w.net.events if e.entity == ALICE and e.kind == "local"]
        ok = executed == 1 and revealed == 1 and (q == 1 or bool(local))
        return AttackRow("expiry-initiator-stops", "expiry", q, None, (), executed, revealed, ok,
                         "initiator sends nothing past its deadline")

    def overrun():
        st = SessionStep(ALICE, BOB, q, SESSION_DELTA, q, payload="job", extra=2)
        w = run_world(base_scenario(q, seed=seed, corrupt={ALICE}, steps=[st]))
        row = _judge("budget-overrun", "budget", q, w, BOB, INITIATOR)
        ex = [e for e in w.net.events if e.entity == BOB and e.detail == "QuotaExhausted"]
        return replace(row, passed=row.passed and bool(ex) and row.executed == q)

    def cross_session_reuse():
        steps = [SessionStep(ALICE, BOB, q, SESSION_DELTA, q, payload="one"),
                 SessionStep(ALICE, BOB, q, SESSION_DELTA, q, payload="two", task="other",
                             reuse=True)]
        w = run_world(base_scenario(q, seed=seed, corrupt={ALICE}, steps=steps))
        return _judge("cross-session-chain-reuse", "reuse", q, w, BOB, INITIATOR, budget=2 * q)

    def inject(tag):
        def run():
            idx = _first(base, tag)
            culprit = ALICE if tag in (HS_INIT, TASK_REQ) else BOB
            adv = {idx: [Action("inject", data=bytes([tag]) + b"\x00\x00\x00\x09garbage")]}
            w = run_world(base_scenario(q, seed=seed, corrupt={culprit}, adversary=adv))
            victim = BOB if culprit == ALICE else ALICE
            return _judge(f"inject-{_LABEL[tag]}", "inject", q, w, victim,
                          INITIATOR if culprit == ALICE else RESPONDER)
        return run

    rows += [expiry_local, overrun, cross_session_reuse, inject(HS_INIT), inject(HS_RESP)]

    def discover_no_rule():
        st = SessionStep(CAROL, ALICE, q, SESSION_DELTA, q)
        w = run_world(base_scenario(q, seed=seed, steps=[st]))
        return _judge("discover-no-rule", "discovery", q, w, CAROL, INITIATOR)

    def discover_zero_budget():
        st = SessionStep(CAROL, ALICE, q, SESSION_DELTA, q)
        sc = base_scenario(q, seed=seed, steps=[st])
        sc.agents[0] = AgentDecl(ALICE, f"sim://{ALICE}",
                                 parse_policy_text(_POLICIES[ALICE] + "\nreceive * 0"))
        w = run_world(sc)
        return _judge("discover-zero-budget", "discovery", q, w, CAROL, INITIATOR)

    def discover_over_budget():
        steps = [SessionStep(CAROL, BOB, 1, SESSION_DELTA, 1, task=f"t{i}") for i in range(2)]
        w = run_world(base_scenario(q, seed=seed, steps=steps))
        return _judge("discover-over-budget", "discovery", q, w, CAROL, INITIATOR, budget=1)

    def stolen_grant():
        w = World(base_scenario(q, seed=seed, corrupt={ALICE}, steps=[]))
        w.setup()
        auth = w.runtimes[CAROL].discover(BOB)  # a grant for carol -> bob
        m0, _ = initiate(w.runtimes[ALICE].agent, auth, q, SESSION_DELTA, w.clock,
                         task_digest=encode("task", "stolen"), payload=b"x", rng=w.rng)
        w.net.request(ALICE, BOB, m0.to_frame())
        return _judge("discover-stolen-grant", "discovery", q, w, BOB, INITIATOR)

    def unregistered():
        w = World(base_scenario(q, seed=seed, steps=[]))
        w.setup()
        try:
            w.provider.discover("mallory@m.org:x", BOB)
            ok = False
        except UnknownAgent:
            ok = True
        return AttackRow("discover-unregistered", "discovery", q, INITIATOR,
                         (INITIATOR,) if ok else (), 0, 0, ok, "UnknownAgent")

    rows += [discover_no_rule, discover_zero_budget, discover_over_budget, stolen_grant,
             unregistered]

    def ots_reuse():
        st = CSessionStep(ALICE, "dynamic", [BOB], rounds=1, picks=2, reuse_ots=True)
        w = run_world(base_scenario(q, seed=seed, corrupt={ALICE}, steps=[st]))
        hit = [e for e in w.net.events if e.entity == BOB and e.detail == "BadProof"]
        row = _judge("delegated-ots-key-reuse", "reuse", q, w, BOB, INITIATOR, budget=6)
        return replace(row, passed=row.passed and bool(hit))

    def ots_honest():
        st = CSessionStep(ALICE, "dynamic", [BOB], rounds=1, picks=2)
        w = run_world(base_scenario(q, seed=seed, steps=[st]))
        executed, revealed = _counts(w)
        ok = not _rejections(w, BOB) and executed == 2
        return AttackRow("delegated-ots-honest", "honest", q, None, (), executed, revealed, ok)

    rows += [ots_reuse, ots_honest]

    def sybil(kind):
        def run():
            w = World(base_scenario(q, seed=seed, steps=[]))
            w.setup()
            alice = w.users["alice@a.org"]
            try:
                if kind == "aid":
                    agent = w.runtimes[ALICE].agent
                    w.provider.register_agent(alice.uid, alice.pwd, agent.aid, "sim://other",
                                              agent.cp, agent.tls_cert, agent.pk, agent.sig_id,
                                              agent.sig_info)
                elif kind == "uid":
                    w.provider.register_user(alice.uid, "pw", alice.cert)
                else:
                    w.ca.issue(alice.uid, b"another key")
                err = None
            except (DuplicateAid, DuplicateUid, BadCertificate) as exc:
                err = exc.name
            except MagiqError as exc:
                err = "unexpected:" + exc.name
            ok = err is not None and not err.startswith("unexpected")
            return AttackRow(f"sybil-{kind}", "sybil", q, USER, (USER,) if ok else (), 0, 0,
                             ok, err or "accepted")
        return run

    rows += [sybil("aid"), sybil("uid"), sybil("cert")]
    return rows


def run_attack_matrix(q: int = 3, seed: int = 11) -> list[AttackRow]:
    return [row() for row in matrix_rows(q, seed)]


def matrix_csv(rows: list[AttackRow]) -> str:
    return "\n".join([CSV_HEADER] + [r.csv() for r in rows]) + "\n"


# -- composed-session conservation ----------------------------------------------------

CSESSION_DELTA = 30


@dataclass(frozen=True)
class ConservationRow:
    name: str
    m: int
    n: int
    consumed: int
    executed: int
    expiry_ok: bool
    passed: bool
    detail: str = ""

    def csv(self) -> str:
        return ",".join([self.name, str(self.m), str(self.n), str(self.consumed),
                         str(self.executed), "ok" if self.expiry_ok else "violated",
                         "pass" if self.passed else "FAIL"])


CONSERVATION_HEADER = "name,m,n,consumed,executed,expiry,result"


def csession_scenario(m: int, n: int, steps, *, corrupt=(), seed: int = 13) -> Scenario:
    pols = {
        ALICE: f"send * 20\nicp {ALICE} {m * n} {CSESSION_DELTA} {m} {n}",
        BOB: f"receive {ALICE} 20\nrcp {BOB} * {m * n + 2} 40",
        CAROL: f"receive {ALICE} 20\nrcp {CAROL} * {m * n + 2} 40",
    }
    agents = [AgentDecl(aid, f"sim://{aid}", parse_policy_text(pols[aid]))
              for aid in (ALICE, BOB, CAROL)]
    return Scenario(name=f"csession-{m}x{n}", seed=seed, heights=dict(FAST_HEIGHTS),
                    users=["alice@a.org", "bob@b.org", "carol@c.org"], agents=agents,
                    corrupt=set(corrupt), steps=list(steps))


def _expiry_ok(w: World) -> tuple[bool, str]:
    """Every execution happened within its session's lifetime and the global window."""
    for aid in (BOB, CAROL):
        rt = w.runtimes[aid]
        for tick, sid in rt.exec_log:
            state = rt.sessions.get(sid)
            if state is None:
                return False, f"{aid} executed for an unknown session"
            if tick > state.t_exp:
                return False, f"{aid} executed at {tick} after {state.t_exp}"
    for c in w.csessions:
        for aid in (BOB, CAROL):
            for tick, _ in w.runtimes[aid].exec_log:
                if tick > c.t_exp_global:
                    return False, f"{aid} executed at {tick} after the global deadline"
    return True, ""


def conservation_rows(m: int, n: int, seed: int = 13) -> list[Callable[[], ConservationRow]]:
    static = [BOB, CAROL][:min(m, 2)]  # chains are dealt round-robin over the plan
    rounds = 2 * n + 1  # always ask for more than the budget allows

    def row(name, steps, corrupt=(), prep=None):
        def run():
            w = World(csession_scenario(m, n, steps, corrupt=corrupt, seed=seed))
            w.setup()
            if prep:
                prep(w)
            for st in w.sc.steps:
                w.run_step(st)
            consumed = sum(c.consumed for c in w.csessions)
            executed = w.runtimes[BOB].executed + w.runtimes[CAROL].executed
            exp_ok, why = _expiry_ok(w)
            ok = consumed <= m * n and executed <= m * n and exp_ok
            return ConservationRow(name, m, n, consumed, executed, exp_ok, ok, why)
        return run

    def skip_bob(w):
        w.runtimes[BOB].skip_rounds = {2}

    return [
        row("honest-static", [CSessionStep(ALICE, "static", static, rounds)]),
        row("honest-dynamic", [CSessionStep(ALICE, "dynamic", [BOB, CAROL], rounds,
                                            picks=m + 1)]),
        row("clock-advance-static", [CSessionStep(ALICE, "static", static, rounds,
                                                  gap=CSESSION_DELTA // n + 1)]),
        row("clock-advance-dynamic", [CSessionStep(ALICE, "dynamic", [BOB, CAROL], rounds,
                                                   picks=m + 1, gap=CSESSION_DELTA // 3)]),
        row("orchestrator-reuses-ots", [CSessionStep(ALICE, "dynamic", [BOB, CAROL], rounds,
                                                     picks=m + 2, reuse_ots=True)],
            corrupt={ALICE}),
        row("responder-skips-token", [CSessionStep(ALICE, "static", static, rounds)],
            corrupt={BOB}, prep=skip_bob),
    ]


def run_conservation(pairs=((2, 2), (4, 3), (1, 5)), seed: int = 13) -> list[ConservationRow]:
    return [r() for m, n in pairs for r in conservation_rows(m, n, seed)]
