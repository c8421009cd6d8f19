"""One-to-many C-sessions: an orchestrator spreads a global budget over A-sessions.

Static workflow: the responders are fixed up front, one personalized chain
is built per assigned slot (bound to that responder's session id), and the
user signs a single Merkle root over all chain terminals.

Dynamic workflow: the user signs a Merkle root over ``m`` fresh one-time
public keys and hands the one-time secrets to the orchestrator, which signs
each new chain terminal with the next unused key once it knows the responder.

Either way the orchestrator enforces ``ctr_global <= q_tot`` and the global
deadline before every message; component sessions are ordinary A-sessions.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass, field
from typing import Callable

from .asession import (DYNAMIC, STATIC, ChainCommitment, CommittedChain, HandshakeInit,
                       SessionState, SessionSummary, Status, close, handle_response, initiate,
                       ots_terminal_message, parse_session_frame, respond, root_message,
                       send_request, session_id)
from .crypto import PersonalizedHashChain, chain_build, merkle_build, merkle_prove, ots_keygen
from .crypto.lamport import OTSKeyPair, ots_sign
from .crypto.merkle import MerkleTree
from .encoding import encode, write_log
from .errors import (RESPONDER, ChainsExhausted, GlobalExpired, GlobalQuotaExhausted,
                     MagiqError, NoChainLeft, PreconditionError, ProtocolError)
from .policy import ChainAssignment, InitiatorPolicy, split_icp
from .provider import AuthorizationToken

Rng = Callable[[int], bytes]
# next_responder(last_response, k) -> aid of the k-th responder, or None to stop
NextResponder = Callable[[bytes | None, int], str | None]
# task(responder_aid, last_response, round) -> next request payload, or None when done
TaskHook = Callable[[str, bytes | None, int], bytes | None]


def _read(clock) -> int:
    return clock.read() if hasattr(clock, "read") else int(clock)


@dataclass
class WorkPlan:
    mode: str
    task_digest: bytes
    icp: InitiatorPolicy
    responders: list[str] = field(default_factory=list)
    assignments: list[ChainAssignment] = field(default_factory=list)
    next_responder: NextResponder | None = None

    def chains_for(self, aid: str) -> ChainAssignment:
        return self.assignments[self.responders.index(aid)]


def plan_static(task_digest: bytes, responders: list[str], icp: InitiatorPolicy) -> WorkPlan:
    if len(set(responders)) != len(responders):
        raise PreconditionError("a static plan lists each responder once")
    return WorkPlan(STATIC, task_digest, icp, list(responders), split_icp(icp, len(responders)))


def plan_dynamic(task_digest: bytes, icp: InitiatorPolicy,
                 next_responder: NextResponder) -> WorkPlan:
    return WorkPlan(DYNAMIC, task_digest, icp, next_responder=next_responder)


def last_response_router(candidates: list[str], limit: int) -> NextResponder:
    """Deterministic stand-in for planning: pick by the final byte of the last answer."""

    def pick(last: bytes | None, k: int) -> str | None:
        if k >= limit:
            return None
        if not last:
            return candidates[0]
        return candidates[last[-1] % len(candidates)]

    return pick


# -- static -------------------------------------------------------------------

@dataclass
class StaticCommitment:
    n: int
    tree: MerkleTree
    sig_icp: bytes
    nonces: dict[str, bytes]
    chains: dict[str, list[PersonalizedHashChain]]
    slots: dict[str, tuple[int, ...]]  # global chain indices per responder
    opened: set[str] = field(default_factory=set)

    @property
    def mroot(self) -> bytes:
        return self.tree.root

    def component(self, aid: str) -> tuple[list[PersonalizedHashChain], ChainCommitment]:
        chains = self.chains.get(aid)
        if not chains or aid in self.opened:
            raise NoChainLeft(f"no unused chain assigned to {aid}")
        entries = tuple(CommittedChain(c.terminal, merkle_prove(self.tree, idx))
                        for c, idx in zip(chains, self.slots[aid]))
        return chains, ChainCommitment(STATIC, self.n, self.sig_icp, entries, self.tree.root)


def commit_static(plan: WorkPlan, agent, *, nonces: dict[str, bytes] | None = None,
                  rng: Rng = secrets.token_bytes) -> StaticCommitment:
    """Build every chain for its responder's session id, then have the user sign the root.

    Session ids are fixed first (one handshake nonce per responder) so each
    chain can be bound to the session it will meter.
    """
    if plan.mode != STATIC:
        raise PreconditionError("commit_static needs a static plan")
    nonces = dict(nonces or {})
    for aid in plan.responders:
        nonces.setdefault(aid, rng(16))
    n = plan.icp.chain_len
    by_index: dict[int, PersonalizedHashChain] = {}
    chains: dict[str, list[PersonalizedHashChain]] = {}
    slots: dict[str, tuple[int, ...]] = {}
    for aid, assignment in zip(plan.responders, plan.assignments):
        sid = session_id(plan.task_digest, agent.aid, aid, nonces[aid])
        built = [chain_build(agent.seed_key, sid, agent.aid, aid, pos, n)
                 for pos in range(len(assignment.chains))]
        chains[aid] = built
        slots[aid] = assignment.chains
        by_index.update(zip(assignment.chains, built))
    tree = merkle_build([by_index[c].terminal for c in range(plan.icp.chain_count)])
    sig = agent.owner.sign("icp-root", root_message(tree.root, n))
    return StaticCommitment(n, tree, sig, nonces, chains, slots)


# -- dynamic ------------------------------------------------------------------

@dataclass
class DynamicCommitment:
    n: int
    ots_batch: list[OTSKeyPair] = field(repr=False)
    tree: MerkleTree = field(repr=False)
    sig_icp: bytes = field(repr=False)
    used_index: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def mroot(self) -> bytes:
        return self.tree.root

    @property
    def m(self) -> int:
        return len(self.ots_batch)


def delegate_dynamic(m: int, n: int, user, *, q_tot: int | None = None,
                     rng: Rng = secrets.token_bytes) -> DynamicCommitment:
    """User side: ``m`` one-time keys, a Merkle root over them, one signature on (root, n)."""
    if m < 1 or n < 1:
        raise PreconditionError("m and n must be positive")
    if q_tot is not None and q_tot != m * n:
        raise PreconditionError(f"q_tot={q_tot} must equal m*n={m * n}")
    batch = [ots_keygen(rng) for _ in range(m)]
    tree = merkle_build([kp.public.digest() for kp in batch])
    sig = user.sign("icp-root", root_message(tree.root, n))
    return DynamicCommitment(n, batch, tree, sig)


def authorize_chain_dynamic(dc: DynamicCommitment, agent, responder_aid: str,
                            sid: bytes) -> tuple[PersonalizedHashChain, ChainCommitment]:
    """Orchestrator side: build a chain for ``sid`` and sign its terminal with the next key."""
    with dc._lock:
        if dc.used_index >= dc.m:
            raise ChainsExhausted(f"all {dc.m} delegated keys are spent")
        idx = dc.used_index
        dc.used_index += 1
    chain = chain_build(agent.seed_key, sid, agent.aid, responder_aid, 0, dc.n)
    kp = dc.ots_batch[idx]
    sig = ots_sign(kp, ots_terminal_message(chain.terminal))
    entry = CommittedChain(chain.terminal, merkle_prove(dc.tree, idx), kp.public.to_bytes(), sig)
    return chain, ChainCommitment(DYNAMIC, dc.n, dc.sig_icp, (entry,), dc.tree.root)


# -- global state ---------------------------------------------------------------

@dataclass
class CSessionState:
    orchestrator_aid: str
    q_tot: int
    delta_tot: int
    t_exp_global: int
    ctr_global: int = 0
    sessions: list[SessionState] = field(default_factory=list)
    summaries: list[SessionSummary] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def check_time(self, clock) -> None:
        if _read(clock) > self.t_exp_global:
            raise GlobalExpired(f"C-session deadline {self.t_exp_global} passed")

    def reserve(self, clock) -> None:
        """Atomic global check-and-increment before a message is sent."""
        with self._lock:
            self.check_time(clock)
            if self.ctr_global >= self.q_tot:
                raise GlobalQuotaExhausted(f"global budget of {self.q_tot} messages spent")
            self.ctr_global += 1

    def release(self) -> None:
        with self._lock:
            self.ctr_global -= 1

    @property
    def consumed(self) -> int:
        """Initiator tokens revealed across all component sessions."""
        total = 0
        for s in self.sessions:
            total += sum(c.length for c in s.own.chains) - s.ctr_own
        return total


def new_csession(aid: str, icp: InitiatorPolicy, clock, *, q_tot: int | None = None) -> CSessionState:
    """``q_tot`` may be set below ``m*n`` to cap the run tighter than the committed chains."""
    cap = icp.q_tot if q_tot is None else q_tot
    if not 1 <= cap <= icp.q_tot:
        raise PreconditionError(f"q_tot cap {cap} outside [1, {icp.q_tot}]")
    return CSessionState(aid, cap, icp.delta_tot, _read(clock) + icp.delta_tot)


def open_component_session(cstate: CSessionState, agent, auth: AuthorizationToken,
                           chains: list[PersonalizedHashChain], commitment: ChainCommitment,
                           clock, *, task_digest: bytes, nonce: bytes, payload: bytes = b"",
                           delta: int | None = None, rng: Rng = secrets.token_bytes
                           ) -> tuple[HandshakeInit, SessionState]:
    """Start one component A-session; its deadline is capped by the global one."""
    cstate.check_time(clock)
    if not chains:
        raise NoChainLeft("no chain left for this responder")
    cstate.reserve(clock)
    q = sum(c.length for c in chains)
    # the responder only learns Δ, so send what is left of the global window
    left = cstate.t_exp_global - _read(clock)
    delta = max(1, min(delta or cstate.delta_tot, left))
    try:
        m0, state = initiate(agent, auth, q, delta, clock,
                             task_digest=task_digest, payload=payload, rng=rng,
                             chains=chains, commitment=commitment, nonce=nonce,
                             t_exp_cap=cstate.t_exp_global)
    except MagiqError:
        cstate.release()
        raise
    cstate.sessions.append(state)
    return m0, state


def respond_component(agent, m0: HandshakeInit, rcp, clock, anchors, nonces, *, seen_ots,
                      executor=lambda p: p, rng: Rng = secrets.token_bytes):
    """Responder side of a component session: the A-session checks plus the root proof.

    ``seen_ots`` is the responder's record of delegated one-time keys already
    accepted, keyed by (orchestrator, root, key digest).
    """
    return respond(agent, m0, rcp, clock, anchors, nonces, executor=executor, rng=rng,
                   seen_ots=seen_ots)


# -- driver ---------------------------------------------------------------------

@dataclass
class CSessionResult:
    mode: str
    orchestrator_aid: str
    q_tot: int
    ctr_global: int
    consumed: int
    t_exp_global: int
    summaries: list[SessionSummary]
    halted: str = ""
    responses: list[tuple[str, bytes]] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (responder, error) before any handshake

    def records(self) -> list[bytes]:
        head = encode("csession", self.mode, self.orchestrator_aid, self.q_tot, self.ctr_global,
                      self.consumed, self.t_exp_global, self.halted)
        return [head] + [s.encode() for s in self.summaries]

    def export(self, path) -> None:
        write_log(path, self.records())


def drive_csession(cstate: CSessionState, plan: WorkPlan, agent, commitment, *,
                   discover: Callable[[str], AuthorizationToken],
                   exchange: Callable[[str, bytes], bytes | None],
                   task: TaskHook, clock, rng: Rng = secrets.token_bytes) -> CSessionResult:
    """Run the component sessions one after another.

    ``discover`` fetches a Provider grant for a responder; ``exchange`` delivers
    a session frame to it and returns its reply (``None`` if nothing came back).
    Global checks come before per-session checks, which come before crypto.
    A component abort is recorded and the next responder is tried; global
    exhaustion or expiry halts the whole run.
    """
    result = CSessionResult(plan.mode, agent.aid, cstate.q_tot, 0, 0, cstate.t_exp_global, [])
    last: bytes | None = None
    k = 0
    while True:
        if plan.mode == STATIC:
            if k >= len(plan.responders):
                break
            aid_r = plan.responders[k]
        else:
            aid_r = plan.next_responder(last, k)
            if aid_r is None:
                break
        k += 1
        try:
            last = _drive_component(cstate, plan, agent, commitment, aid_r, discover, exchange,
                                    task, clock, rng, result) or last
        except (GlobalQuotaExhausted, GlobalExpired, ChainsExhausted) as exc:
            result.halted = exc.name
            break
    result.summaries = list(cstate.summaries)
    result.ctr_global = cstate.ctr_global
    result.consumed = cstate.consumed
    return result


def _drive_component(cstate, plan, agent, commitment, aid_r, discover, exchange, task, clock,
                     rng, result) -> bytes | None:
    cstate.check_time(clock)
    first = task(aid_r, None, 1)
    if first is None:
        return None
    try:
        auth = discover(aid_r)
    except MagiqError as exc:
        result.skipped.append((aid_r, exc.name))
        return None
    if plan.mode == STATIC:
        chains, comm = commitment.component(aid_r)
        nonce = commitment.nonces[aid_r]
        commitment.opened.add(aid_r)
    else:
        nonce = rng(16)
        sid = session_id(plan.task_digest, agent.aid, aid_r, nonce)
        chain, comm = authorize_chain_dynamic(commitment, agent, aid_r, sid)
        chains = [chain]
    m0, state = open_component_session(cstate, agent, auth, chains, comm, clock,
                                       task_digest=plan.task_digest, nonce=nonce, payload=first,
                                       rng=rng)
    last = None
    try:
        reply = exchange(aid_r, m0.to_frame())
        if reply is None:
            return None
        last = handle_response(state, parse_session_frame(reply, RESPONDER), clock)
        result.responses.append((aid_r, last))
        rnd = 2
        while state.status == Status.OPEN and state.ctr_own > 0 and state.ctr_peer > 0:
            payload = task(aid_r, last, rnd)
            if payload is None:
                break
            cstate.reserve(clock)
            try:
                msg = send_request(state, payload, clock)
            except MagiqError:
                cstate.release()
                raise
            reply = exchange(aid_r, msg.to_frame())
            if reply is None:
                break
            last = handle_response(state, parse_session_frame(reply, RESPONDER), clock)
            result.responses.append((aid_r, last))
            rnd += 1
    except (GlobalQuotaExhausted, GlobalExpired):
        cstate.summaries.append(close(state))
        raise
    except (ProtocolError, MagiqError):
        pass  # the component is aborted (or locally out of budget/time); others continue
    cstate.summaries.append(close(state))
    return last
