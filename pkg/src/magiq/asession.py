"""Two-agent A-session: handshake, token-metered transmission, expiry.

Each side owns one hash chain that meters its own messages: the initiator's
chain counts requests, the responder's counts responses.  The handshake
message ``m0`` already carries request 1 (and ``m1`` its response), so a
session with budget ``Q`` carries exactly ``Q`` request/response rounds.

A counter is decremented exactly when the matching token is revealed (by the
sender) or accepted (by the receiver), so ``ctr_icp``/``ctr_rcp`` always
equal the number of still-unopened tokens on each chain.

Every verification failure on a received message raises a
:class:`~magiq.errors.ProtocolError` naming the sender's role as the
accountable party and moves the session to ``aborted``.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .crypto import (ChainVerifier, Digest, NextTok, PersonalizedHashChain, chain_build,
                     chain_verify_first, ct_equal, hash_fields, hmac,
                     hmac_verify, merkle_verify, ots_verify, sig_verify)
from .crypto.lamport import OTSPublicKey
from .crypto.merkle import MerkleProof
from .encoding import (EncodingError, decode, decode_exact, encode, frame, read_log, to_int, to_str,
                       write_log)
from .errors import (INITIATOR, RESPONDER, BadInitiatorSig, BadProof, BadProviderSig, BadTag,
                     BadToken, BadUserSig, CounterMismatch, Expired, InvalidState,
                     MalformedMessage, OwnBudgetExhausted, PeerAborted, PeerBudgetExhausted,
                     PreconditionError, ProtocolError, QuotaExhausted, ReplayedNonce,
                     SessionExpired, error_for_code)
from .identity import AgentInfo, verify_agent_info
from .policy import effective_session_policy
from .provider import AuthorizationToken

Rng = Callable[[int], bytes]
Executor = Callable[[bytes], bytes]

HS_INIT = 0x10
HS_RESP = 0x11
TASK_REQ = 0x12
TASK_RESP = 0x13
TERMINAL = 0x14
SESSION_TAGS = {HS_INIT, HS_RESP, TASK_REQ, TASK_RESP, TERMINAL}

NONCE_SIZE = 16


class Status(str, Enum):
    HANDSHAKING = "handshaking"
    OPEN = "open"
    EXHAUSTED = "exhausted"
    EXPIRED = "expired"
    ABORTED = "aborted"
    CLOSED = "closed"


TERMINAL_STATUSES = {Status.EXHAUSTED, Status.EXPIRED, Status.ABORTED, Status.CLOSED}


# -- signed / MAC'd statements ---------------------------------------------

def session_id(task_digest: bytes, aid_i: str, aid_r: str, nonce: bytes) -> Digest:
    return hash_fields("magiq/sid", task_digest, aid_i, aid_r, nonce)


def session_key(r1: bytes, r2: bytes) -> Digest:
    return hash_fields(r1, r2)


def icp_message(terminal: bytes, q: int) -> bytes:
    return encode("magiq/icp", terminal, q)


def rcp_message(terminal: bytes, q: int) -> bytes:
    return encode("magiq/rcp", terminal, q)


def root_message(mroot: bytes, n: int) -> bytes:
    return encode("magiq/icp-root", mroot, n)


def ots_terminal_message(terminal: bytes) -> bytes:
    return encode("magiq/chain-root", terminal)


# -- chain commitments ------------------------------------------------------

DIRECT = "direct"
STATIC = "static"
DYNAMIC = "dynamic"


@dataclass(frozen=True)
class CommittedChain:
    """One committed chain terminal plus whatever proves it is in the commitment."""

    terminal: Digest
    proof: MerkleProof | None = None
    ots_pk: bytes = b""
    ots_sig: bytes = b""

    def encode(self) -> bytes:
        return encode(self.terminal, self.proof.encode() if self.proof else b"", self.ots_pk,
                      self.ots_sig)

    @classmethod
    def decode(cls, data: bytes) -> "CommittedChain":
        t, p, pk, sig = decode_exact(data, 4)
        return cls(Digest(t), MerkleProof.decode(p) if p else None, pk, sig)


@dataclass(frozen=True)
class ChainCommitment:
    """A user-signed commitment to the initiator's chain terminal(s).

    ``direct``: user signature over ``(terminal, q)``.
    ``static``: user signature over ``(Mroot, n)``; Merkle proof per terminal.
    ``dynamic``: user signature over ``(Mroot, n)`` where the tree holds OTS
    public keys; each terminal carries an OTS signature and a proof for its key.
    """

    kind: str
    n: int
    user_sig: bytes
    chains: tuple[CommittedChain, ...]
    mroot: bytes = b""

    def encode(self) -> bytes:
        return encode(self.kind, self.n, self.user_sig, [c.encode() for c in self.chains],
                      self.mroot)

    @classmethod
    def decode(cls, data: bytes) -> "ChainCommitment":
        kind, n, sig, chains, mroot = decode_exact(data, 5)
        return cls(to_str(kind), to_int(n), sig,
                   tuple(CommittedChain.decode(c) for c in decode(chains)), mroot)

    @property
    def capacity(self) -> int:
        return self.n * len(self.chains)


def direct_commitment(chain: PersonalizedHashChain, user_sign) -> ChainCommitment:
    sig = user_sign("icp", icp_message(chain.terminal, chain.length))
    return ChainCommitment(DIRECT, chain.length, sig, (CommittedChain(chain.terminal),))


def verify_commitment(c: ChainCommitment, pk_user: bytes, accountable: str,
                      seen_ots: set | None = None, ots_scope: bytes = b"") -> None:
    """Check a chain commitment; raises BadUserSig / BadProof / BadToken."""
    if not c.chains or c.n < 1:
        raise BadToken("commitment holds no chains", accountable=accountable)
    terminals = [bytes(x.terminal) for x in c.chains]
    if len(set(terminals)) != len(terminals):
        raise BadToken("commitment lists a terminal twice", accountable=accountable)
    if c.kind == DIRECT:
        if len(c.chains) != 1 or not sig_verify(pk_user, icp_message(c.chains[0].terminal, c.n),
                                                c.user_sig):
            raise BadUserSig("user signature on the chain terminal fails", accountable=accountable)
        return
    if c.kind not in (STATIC, DYNAMIC):
        raise MalformedMessage(f"unknown commitment kind {c.kind!r}", accountable=accountable)
    if not sig_verify(pk_user, root_message(c.mroot, c.n), c.user_sig):
        raise BadUserSig("user signature on the Merkle root fails", accountable=accountable)
    pks = []
    for ch in c.chains:
        if ch.proof is None:
            raise BadProof("missing Merkle proof", accountable=accountable)
        if c.kind == STATIC:
            if not merkle_verify(c.mroot, ch.terminal, ch.proof):
                raise BadProof("chain terminal is not under the signed root",
                               accountable=accountable)
            continue
        try:
            pk = OTSPublicKey.from_bytes(ch.ots_pk)
        except EncodingError:
            raise BadProof("malformed OTS public key", accountable=accountable) from None
        if not ots_verify(pk, ots_terminal_message(ch.terminal), ch.ots_sig):
            raise BadUserSig("delegated OTS signature on the terminal fails",
                             accountable=accountable)
        if not merkle_verify(c.mroot, pk.digest(), ch.proof):
            raise BadProof("OTS key is not under the signed root", accountable=accountable)
        pks.append((ots_scope, bytes(c.mroot), pk.digest()))
    if c.kind == DYNAMIC:
        if len(set(pks)) != len(pks):
            raise BadProof("OTS key used twice", accountable=accountable)
        if seen_ots is not None:
            if any(k in seen_ots for k in pks):
                raise BadProof("delegated OTS key already used", accountable=accountable)


# -- messages ---------------------------------------------------------------

@dataclass(frozen=True)
class HandshakeInit:
    r1: bytes
    info: AgentInfo
    q: int
    delta: int
    next_tok: NextTok
    task_digest: bytes
    nonce: bytes
    responder_aid: str
    payload: bytes
    commitment: ChainCommitment
    auth: AuthorizationToken
    sig_init: bytes = b""

    def signed_part(self) -> bytes:
        return encode("magiq/m0", self.r1, self.info.encode(), self.q, self.delta,
                      self.next_tok.encode(), self.task_digest, self.nonce, self.responder_aid,
                      self.payload, self.commitment.encode(), self.auth.encode())

    @property
    def sid(self) -> Digest:
        return session_id(self.task_digest, self.info.aid, self.responder_aid, self.nonce)

    def fields(self) -> list:
        return [self.r1, self.info.encode(), self.q, self.delta, self.next_tok.encode(),
                self.task_digest, self.nonce, self.responder_aid, self.payload,
                self.commitment.encode(), self.auth.encode(), self.sig_init]

    def to_frame(self) -> bytes:
        return frame(HS_INIT, encode(*self.fields()))

    @classmethod
    def from_body(cls, body: bytes) -> "HandshakeInit":
        (r1, info, q, delta, tok, task, nonce, aid_r, payload, comm, auth,
         sig) = decode_exact(body, 12)
        return cls(r1, AgentInfo.decode(info), to_int(q), to_int(delta), NextTok.decode(tok),
                   task, nonce, to_str(aid_r), payload, ChainCommitment.decode(comm),
                   AuthorizationToken.decode(auth), sig)


@dataclass(frozen=True)
class HandshakeResp:
    sid: bytes
    r2: bytes
    q_r: int
    delta_r: int
    next_tok_rcp: NextTok
    icp_echo: bytes
    sig_rcp: bytes
    payload: bytes
    tag: bytes = b""

    def mac_input(self) -> bytes:
        return encode("magiq/m1", self.sid, self.r2, self.q_r, self.delta_r,
                      self.next_tok_rcp.encode(), self.icp_echo, self.sig_rcp, self.payload)

    def to_frame(self) -> bytes:
        return frame(HS_RESP, encode(self.sid, self.r2, self.q_r, self.delta_r,
                                     self.next_tok_rcp.encode(), self.icp_echo, self.sig_rcp,
                                     self.payload, self.tag))

    @classmethod
    def from_body(cls, body: bytes) -> "HandshakeResp":
        sid, r2, q, d, tok, echo, sig, payload, tag = decode_exact(body, 9)
        return cls(sid, r2, to_int(q), to_int(d), NextTok.decode(tok), echo, sig, payload, tag)


@dataclass(frozen=True)
class TaskMsg:
    sid: bytes
    kind: int  # TASK_REQ or TASK_RESP
    payload: bytes
    tok_own: NextTok
    tok_peer_echo: bytes
    tag: bytes = b""

    def mac_input(self) -> bytes:
        return encode("magiq/task", self.sid, self.kind, self.payload, self.tok_own.encode(),
                      self.tok_peer_echo)

    def to_frame(self) -> bytes:
        return frame(self.kind, encode(self.sid, self.payload, self.tok_own.encode(),
                                       self.tok_peer_echo, self.tag))

    @classmethod
    def from_body(cls, kind: int, body: bytes) -> "TaskMsg":
        sid, payload, tok, echo, tag = decode_exact(body, 5)
        return cls(sid, kind, payload, NextTok.decode(tok), echo, tag)


@dataclass(frozen=True)
class TerminalMsg:
    """Quota-exhausted / session-expired notice, MAC'd under the session key."""

    sid: bytes
    code: int
    tag: bytes = b""

    def mac_input(self) -> bytes:
        return encode("magiq/terminal", self.sid, self.code)

    def to_frame(self) -> bytes:
        return frame(TERMINAL, encode(self.sid, self.code, self.tag))

    @classmethod
    def from_body(cls, body: bytes) -> "TerminalMsg":
        sid, code, tag = decode_exact(body, 3)
        return cls(sid, to_int(code), tag)


def parse_session_frame(data: bytes, sender_role: str):
    """Decode any session frame; malformed input is blamed on the sender."""
    try:
        if not data:
            raise EncodingError("empty frame")
        tag, body = data[0], data[1:]
        if tag == HS_INIT:
            return HandshakeInit.from_body(body)
        if tag == HS_RESP:
            return HandshakeResp.from_body(body)
        if tag in (TASK_REQ, TASK_RESP):
            return TaskMsg.from_body(tag, body)
        if tag == TERMINAL:
            return TerminalMsg.from_body(body)
        raise EncodingError(f"unknown session frame tag {tag:#x}")
    except (EncodingError, ValueError, IndexError) as exc:
        raise MalformedMessage(str(exc), accountable=sender_role) from None


# -- token bookkeeping --------------------------------------------------------

@dataclass
class TokenWallet:
    """Own chains, opened top-down one token at a time, chain after chain."""

    chains: list[PersonalizedHashChain]
    chain_pos: int = 0
    next_index: int = field(default=-1)
    last_value: Digest | None = None

    def __post_init__(self):
        if self.next_index < 0:
            self.next_index = self.chains[0].length - 1

    @property
    def remaining(self) -> int:
        if self.chain_pos >= len(self.chains):
            return 0
        rest = sum(c.length for c in self.chains[self.chain_pos + 1:])
        return self.next_index + 1 + rest

    @property
    def current(self) -> PersonalizedHashChain:
        return self.chains[self.chain_pos]

    def open_next(self) -> NextTok:
        if self.remaining == 0:
            raise OwnBudgetExhausted("no unopened tokens left")
        chain = self.current
        first = self.next_index == chain.length - 1
        tok = chain.token(self.next_index, first=first)
        chain.forget_above(self.next_index - 1)  # the revealed link is not kept either
        self.last_value = tok.value
        self.next_index -= 1
        if self.next_index < 0:
            self.chain_pos += 1
            if self.chain_pos < len(self.chains):
                self.next_index = self.chains[self.chain_pos].length - 1
        return tok


@dataclass
class PeerTokens:
    """Counterparty view over one or more committed chains of the peer."""

    sid: bytes
    bound_aid: str  # aid bound into the peer's links (our own aid)
    terminals: list[Digest]
    n: int
    current: ChainVerifier | None = None
    chain_pos: int = 0
    closed_chains: int = 0

    @property
    def remaining(self) -> int:
        if self.current is None:
            return self.n * len(self.terminals)
        return self.current.remaining + self.n * (len(self.terminals) - self.chain_pos - 1)

    @property
    def head(self) -> Digest | None:
        return None if self.current is None else self.current.head

    def accept(self, tok: NextTok) -> bool:
        starting = self.current is None or self.current.head_index == 0
        if starting:
            pos = 0 if self.current is None else self.chain_pos + 1
            if pos >= len(self.terminals) or tok.terminal is None:
                return False
            if tok.index != self.n - 1 or not ct_equal(tok.terminal, self.terminals[pos]):
                return False
            if not chain_verify_first(tok, self.sid, self.bound_aid):
                return False
            self.current = ChainVerifier.from_first(tok, self.sid, self.bound_aid)
            self.chain_pos = pos
        elif not self.current.accept(tok):
            return False
        if self.current.head_index == 0:
            self.closed_chains += 1
        return True


# -- session state ------------------------------------------------------------

@dataclass
class SessionState:
    role: str
    sid: Digest
    self_aid: str
    peer_aid: str
    k_ses: Digest | None
    own: TokenWallet
    peer: PeerTokens | None
    t_exp: int
    q: int
    delta: int
    status: Status = Status.HANDSHAKING
    r1: bytes = b""
    peer_user_pk: bytes = b""
    awaiting: bool = False
    requests_sent: int = 0
    requests_executed: int = 0
    responses_accepted: int = 0
    cause: str = ""
    accountable: str | None = None
    error: str = ""
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def ctr_own(self) -> int:
        return self.own.remaining

    @property
    def ctr_peer(self) -> int:
        return 0 if self.peer is None else self.peer.remaining

    @property
    def ctr_icp(self) -> int:
        return self.ctr_own if self.role == INITIATOR else self.ctr_peer

    @property
    def ctr_rcp(self) -> int:
        return self.ctr_peer if self.role == INITIATOR else self.ctr_own

    @property
    def peer_role(self) -> str:
        return RESPONDER if self.role == INITIATOR else INITIATOR

    def retained_preimages(self) -> list[tuple[int, list[int]]]:
        """Inspection hook: indices of links still stored, per own chain (by addr).

        Only never-revealed links survive: after a token at index ``j`` is
        opened, every link ``>= j`` is gone.
        """
        return [(c.addr, c.retained()) for c in self.own.chains]

    def _finish(self, status: Status, cause: str, accountable: str | None = None,
                error: str = "") -> None:
        if self.status in TERMINAL_STATUSES:
            return
        self.status = status
        self.cause = cause
        self.accountable = accountable
        self.error = error

    def fail(self, exc: ProtocolError) -> ProtocolError:
        if isinstance(exc, QuotaExhausted):
            self._finish(Status.EXHAUSTED, "exhausted", exc.accountable, exc.name)
        elif isinstance(exc, SessionExpired):
            self._finish(Status.EXPIRED, "expired", exc.accountable, exc.name)
        else:
            self._finish(Status.ABORTED, "aborted", exc.accountable, exc.name)
        return exc


def _read(clock) -> int:
    return clock.read() if hasattr(clock, "read") else int(clock)


# -- initiator ----------------------------------------------------------------

def initiate(agent, auth: AuthorizationToken, q: int, delta: int, clock, *,
             task_digest: bytes, payload: bytes = b"", rng: Rng = secrets.token_bytes,
             chains: list[PersonalizedHashChain] | None = None,
             commitment: ChainCommitment | None = None,
             nonce: bytes | None = None, t_exp_cap: int | None = None
             ) -> tuple[HandshakeInit, SessionState]:
    """Build ``m0`` (carrying request 1) and the initiator's session state.

    With ``chains``/``commitment`` omitted a single chain of length ``q`` is
    built at ``addr=0`` and committed by a direct user signature.  C-session
    components pass pre-built chains and their Merkle/OTS commitment instead.
    """
    if q < 1 or delta < 1:
        raise PreconditionError("session budgets q and delta must be >= 1")
    aid_r = auth.responder.aid
    nonce = nonce if nonce is not None else rng(NONCE_SIZE)
    sid = session_id(task_digest, agent.aid, aid_r, nonce)
    if chains is None:
        chains = [chain_build(agent.seed_key, sid, agent.aid, aid_r, 0, q)]
        commitment = direct_commitment(chains[0], agent.owner.sign)
    elif commitment is None:
        raise PreconditionError("pre-built chains need their commitment")
    q = sum(c.length for c in chains)
    wallet = TokenWallet(list(chains))
    now = _read(clock)
    t_exp = now + delta if t_exp_cap is None else min(now + delta, t_exp_cap)
    state = SessionState(INITIATOR, sid, agent.aid, aid_r, None, wallet, None, t_exp, q, delta,
                         r1=rng(32), peer_user_pk=auth.responder.user_cert.pk)
    tok = wallet.open_next()
    m0 = HandshakeInit(state.r1, agent.info, q, delta, tok, task_digest, nonce, aid_r, payload,
                       commitment, auth)
    m0 = HandshakeInit(**{**m0.__dict__, "sig_init": agent.sign(m0.signed_part())})
    state.awaiting = True
    state.requests_sent = 1
    return m0, state


def send_request(state: SessionState, payload: bytes, clock) -> TaskMsg:
    if state.role != INITIATOR:
        raise InvalidState("only the initiator sends requests")
    if state.status != Status.OPEN:
        raise InvalidState(f"session is {state.status.value}")
    if state.awaiting:
        raise InvalidState("previous request has no accepted response yet")
    if _read(clock) > state.t_exp:
        state._finish(Status.EXPIRED, "expired")
        raise Expired(f"session expired at tick {state.t_exp}")
    if state.ctr_own == 0:
        state._finish(Status.EXHAUSTED, "exhausted")
        raise OwnBudgetExhausted("initiator token budget spent")
    if state.ctr_peer == 0:
        state._finish(Status.EXHAUSTED, "exhausted")
        raise PeerBudgetExhausted("responder token budget spent")
    tok = state.own.open_next()
    msg = TaskMsg(state.sid, TASK_REQ, payload, tok, state.peer.head)
    msg = TaskMsg(**{**msg.__dict__, "tag": hmac(state.k_ses, msg.mac_input())})
    state.awaiting = True
    state.requests_sent += 1
    return msg


def handle_response(state: SessionState, msg, clock) -> bytes:
    """Accept ``m1`` or a later response; returns the response payload."""
    if state.role != INITIATOR:
        raise InvalidState("only the initiator handles responses")
    if state.status in TERMINAL_STATUSES:
        raise InvalidState(f"session is {state.status.value}")
    try:
        return _handle_response(state, msg, clock)
    except ProtocolError as exc:
        raise state.fail(exc)


def _handle_response(state: SessionState, msg, clock) -> bytes:
    R = RESPONDER
    if isinstance(msg, TerminalMsg):
        return _handle_terminal(state, msg)
    if not state.awaiting:
        raise BadToken("response without an outstanding request", accountable=R)
    if _read(clock) > state.t_exp:
        state._finish(Status.EXPIRED, "expired")
        raise Expired(f"session expired at tick {state.t_exp}")
    if state.status == Status.HANDSHAKING:
        if not isinstance(msg, HandshakeResp):
            raise BadToken("expected the handshake response", accountable=R)
        if not ct_equal(msg.sid, state.sid):
            raise BadToken("handshake response for another session", accountable=R)
        k = session_key(state.r1, msg.r2)
        if not hmac_verify(k, msg.mac_input(), msg.tag):
            raise BadTag("m1 tag does not verify", accountable=R)
        if not ct_equal(msg.icp_echo, state.own.last_value):
            raise BadToken("m1 does not echo the initiator's first token", accountable=R)
        tok = msg.next_tok_rcp
        if tok.terminal is None or msg.q_r < 1 or tok.index != msg.q_r - 1:
            raise BadUserSig("signed responder budget does not match its chain", accountable=R)
        if not sig_verify(state.peer_user_pk, rcp_message(tok.terminal, msg.q_r), msg.sig_rcp):
            raise BadUserSig("user signature on the responder chain fails", accountable=R)
        peer = PeerTokens(state.sid, state.self_aid, [tok.terminal], msg.q_r)
        if not peer.accept(tok):
            raise BadToken("responder chain head does not verify", accountable=R)
        state.k_ses = k
        state.peer = peer
        state.t_exp = min(state.t_exp, _read(clock) + msg.delta_r)
        state.status = Status.OPEN
        state.awaiting = False
        state.responses_accepted += 1
        return msg.payload
    if not isinstance(msg, TaskMsg) or msg.kind != TASK_RESP:
        raise BadToken("expected a task response", accountable=R)
    if not ct_equal(msg.sid, state.sid):
        raise BadToken("response for another session", accountable=R)
    if not hmac_verify(state.k_ses, msg.mac_input(), msg.tag):
        raise BadTag("response tag does not verify", accountable=R)
    if not ct_equal(msg.tok_peer_echo, state.own.last_value):
        raise BadToken("response does not echo the latest request token", accountable=R)
    if state.peer.remaining == 0:
        raise CounterMismatch("response beyond the responder's signed budget", accountable=R)
    if not state.peer.accept(msg.tok_own):
        raise BadToken("responder token is not the next link of its chain", accountable=R)
    state.awaiting = False
    state.responses_accepted += 1
    return msg.payload


def _handle_terminal(state: SessionState, msg: TerminalMsg) -> bytes:
    if state.k_ses is None or not hmac_verify(state.k_ses, msg.mac_input(), msg.tag):
        raise BadTag("terminal notice tag does not verify", accountable=state.peer_role)
    err = error_for_code(msg.code)
    if err is SessionExpired:
        state._finish(Status.EXPIRED, "peer-expired")
    elif err is QuotaExhausted:
        state._finish(Status.EXHAUSTED, "peer-exhausted")
    else:
        state._finish(Status.ABORTED, "peer-aborted")
    raise PeerAborted(f"peer terminated the session: {err.__name__}")


# -- responder ----------------------------------------------------------------

class NonceRegistry:
    """Seen authorization nonces; shared by all sessions of one responder."""

    def __init__(self):
        self._seen: set[bytes] = set()
        self._lock = threading.Lock()

    def seen(self, nonce: bytes) -> bool:
        return nonce in self._seen

    def add(self, nonce: bytes) -> bool:
        with self._lock:
            if nonce in self._seen:
                return False
            self._seen.add(nonce)
            return True

    def __len__(self) -> int:
        return len(self._seen)


@dataclass
class TrustAnchors:
    ca_pk: bytes
    pk_ta: bytes
    tls_pk_ta: bytes


def respond(agent, m0: HandshakeInit, rcp, clock, anchors: TrustAnchors,
            nonces: NonceRegistry, *, executor: Executor = lambda p: p,
            rng: Rng = secrets.token_bytes, seen_ots: set | None = None
            ) -> tuple[HandshakeResp, SessionState]:
    """Verify ``m0``, execute request 1 and answer with ``m1``.

    ``rcp`` is the responder's policy for this initiator (``None`` accepts the
    initiator's own budgets).  All checks raise with the initiator accountable.
    """
    I = INITIATOR
    auth = m0.auth
    if nonces.seen(auth.nonce):
        raise ReplayedNonce("authorization nonce already used", accountable=I)
    if auth.responder.aid != agent.aid:
        raise BadProviderSig("authorization names another responder", accountable=I)
    if not sig_verify(anchors.pk_ta, auth.signed_message(), auth.sig):
        raise BadProviderSig("provider authorization signature fails", accountable=I)
    info = m0.info
    if auth.initiator_aid != info.aid or not ct_equal(auth.initiator_pk, info.metadata.pk):
        raise BadProviderSig("authorization was granted to another initiator", accountable=I)
    if not verify_agent_info(info, anchors.ca_pk, anchors.tls_pk_ta, anchors.pk_ta):
        raise BadInitiatorSig("initiator identity bundle fails", accountable=I)
    if not sig_verify(info.metadata.pk, m0.signed_part(), m0.sig_init):
        raise BadInitiatorSig("initiator signature on m0 fails", accountable=I)
    c = m0.commitment
    if c.capacity != m0.q:
        raise BadUserSig("signed chain budget does not match the requested budget",
                         accountable=I)
    verify_commitment(c, info.user_cert.pk, I, seen_ots, ots_scope=info.aid.encode())
    sid = m0.sid
    peer = PeerTokens(sid, agent.aid, [x.terminal for x in c.chains], c.n)
    if not peer.accept(m0.next_tok):
        raise BadToken("initiator first token does not open the committed chain",
                       accountable=I)
    if len(m0.r1) != 32 or len(m0.nonce) != NONCE_SIZE:
        raise MalformedMessage("bad randomness length", accountable=I)
    if not nonces.add(auth.nonce):
        raise ReplayedNonce("authorization nonce already used", accountable=I)
    if seen_ots is not None and c.kind == DYNAMIC:
        for ch in c.chains:
            seen_ots.add((info.aid.encode(), bytes(c.mroot),
                          OTSPublicKey.from_bytes(ch.ots_pk).digest()))
    q_r, delta_r = (m0.q, m0.delta) if rcp is None else effective_session_policy(
        m0.q, m0.delta, rcp.q, rcp.delta)
    now = _read(clock)
    own_chain = chain_build(agent.seed_key, sid, agent.aid, info.aid, 0, q_r)
    sig_rcp = agent.owner.sign("rcp", rcp_message(own_chain.terminal, q_r))
    r2 = rng(32)
    k = session_key(m0.r1, r2)
    state = SessionState(RESPONDER, sid, agent.aid, info.aid, k, TokenWallet([own_chain]), peer,
                         now + delta_r, q_r, delta_r, status=Status.OPEN,
                         peer_user_pk=info.user_cert.pk)
    result = executor(m0.payload)
    state.requests_executed = 1
    tok = state.own.open_next()
    m1 = HandshakeResp(sid, r2, q_r, delta_r, tok, m0.next_tok.value, sig_rcp, result)
    m1 = HandshakeResp(**{**m1.__dict__, "tag": hmac(k, m1.mac_input())})
    return m1, state


def handle_request(state: SessionState, msg: TaskMsg, clock, *,
                   executor: Executor = lambda p: p) -> TaskMsg:
    """Serve request ``i``.  Terminal errors carry a notice for the peer in ``exc.info``."""
    if state.role != RESPONDER:
        raise InvalidState("only the responder handles requests")
    if state.status in TERMINAL_STATUSES:
        raise InvalidState(f"session is {state.status.value}")
    I = INITIATOR
    try:
        # budget and time first, before any cryptographic work
        if state.ctr_own == 0 or state.ctr_peer == 0:
            raise QuotaExhausted("request beyond the session budget", accountable=I)
        if _read(clock) > state.t_exp:
            raise SessionExpired(f"session expired at tick {state.t_exp}", accountable=None)
        if not isinstance(msg, TaskMsg) or msg.kind != TASK_REQ:
            raise BadToken("expected a task request", accountable=I)
        if not hmac_verify(state.k_ses, msg.mac_input(), msg.tag):
            raise BadTag("request tag does not verify", accountable=I)
        if not ct_equal(msg.tok_peer_echo, state.own.last_value):
            raise BadToken("request does not echo the latest response token", accountable=I)
        if not state.peer.accept(msg.tok_own):
            raise BadToken("initiator token is not the next link of its chain", accountable=I)
    except (QuotaExhausted, SessionExpired) as exc:
        notice = TerminalMsg(state.sid, exc.code)
        exc.info["notice"] = TerminalMsg(state.sid, exc.code, hmac(state.k_ses, notice.mac_input()))
        raise state.fail(exc)
    except ProtocolError as exc:
        raise state.fail(exc)
    result = executor(msg.payload)
    state.requests_executed += 1
    tok = state.own.open_next()
    resp = TaskMsg(state.sid, TASK_RESP, result, tok, msg.tok_own.value)
    return TaskMsg(**{**resp.__dict__, "tag": hmac(state.k_ses, resp.mac_input())})


# -- summary --------------------------------------------------------------------

@dataclass(frozen=True)
class SessionSummary:
    sid: str
    role: str
    self_aid: str
    peer_aid: str
    q: int
    own_tokens_used: int
    peer_tokens_accepted: int
    requests: int
    cause: str
    accountable: str | None
    error: str

    def encode(self) -> bytes:
        return encode("session", self.sid, self.role, self.self_aid, self.peer_aid, self.q,
                      self.own_tokens_used, self.peer_tokens_accepted, self.requests, self.cause,
                      self.accountable or "", self.error)


def close(state: SessionState) -> SessionSummary:
    state._finish(Status.CLOSED, "closed")
    own_total = sum(c.length for c in state.own.chains)
    peer_total = 0 if state.peer is None else state.peer.n * len(state.peer.terminals)
    requests = state.requests_executed if state.role == RESPONDER else state.responses_accepted
    return SessionSummary(state.sid.hex(), state.role, state.self_aid, state.peer_aid, state.q,
                          own_total - state.ctr_own, peer_total - state.ctr_peer, requests,
                          state.cause, state.accountable, state.error)


# -- transcripts ----------------------------------------------------------------

def export_transcript(frames, path) -> None:
    """One framed session message per log record."""
    write_log(path, list(frames))


def load_transcript(path) -> list[bytes]:
    return read_log(path)


@dataclass(frozen=True)
class TranscriptAudit:
    sid: str
    requests: int
    responses: int
    ok: bool
    problem: str = ""
    accountable: str | None = None


def audit_transcript(frames) -> TranscriptAudit:
    """Re-check the public parts of a session transcript without the session key.

    The initiator signature on ``m0``, both user-signed chain commitments and
    every token's chain step are verifiable by a third party, so the audit
    can tell which side sent the first message that does not fit.
    """
    requests = responses = 0
    sid = b""
    ini = rsp = None
    for raw in frames:
        role = INITIATOR if raw[:1] in (bytes([HS_INIT]), bytes([TASK_REQ])) else RESPONDER
        try:
            msg = parse_session_frame(raw, role)
            if isinstance(msg, HandshakeInit):
                if ini is not None:
                    raise BadToken("second handshake in one transcript", accountable=role)
                if not sig_verify(msg.info.metadata.pk, msg.signed_part(), msg.sig_init):
                    raise BadInitiatorSig("m0 signature", accountable=role)
                verify_commitment(msg.commitment, msg.info.user_cert.pk, role)
                sid = msg.sid
                ini = PeerTokens(sid, msg.responder_aid, [c.terminal for c in msg.commitment.chains],
                                 msg.commitment.n)
                aid_i = msg.info.aid
                user_r = msg.auth.responder.user_cert.pk
                if not ini.accept(msg.next_tok):
                    raise BadToken("initiator first token", accountable=role)
                requests += 1
            elif ini is None:
                raise BadToken("transcript does not start with a handshake", accountable=role)
            elif isinstance(msg, HandshakeResp):
                tok = msg.next_tok_rcp
                if (tok.terminal is None or tok.index != msg.q_r - 1
                        or not sig_verify(user_r, rcp_message(tok.terminal, msg.q_r), msg.sig_rcp)):
                    raise BadUserSig("responder commitment", accountable=role)
                rsp = PeerTokens(sid, aid_i, [tok.terminal], msg.q_r)
                if not rsp.accept(tok):
                    raise BadToken("responder first token", accountable=role)
                responses += 1
            elif isinstance(msg, TaskMsg):
                tracker = ini if msg.kind == TASK_REQ else rsp
                if tracker is None or not ct_equal(msg.sid, sid) or not tracker.accept(msg.tok_own):
                    raise BadToken("token does not continue the committed chain", accountable=role)
                if msg.kind == TASK_REQ:
                    requests += 1
                else:
                    responses += 1
        except ProtocolError as exc:
            return TranscriptAudit(bytes(sid).hex(), requests, responses, False, str(exc),
                                   exc.accountable)
    return TranscriptAudit(bytes(sid).hex(), requests, responses, True)
