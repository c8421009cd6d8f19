"""Deterministic network simulator: clock, secure channels, adversary, scenarios.

Channels are ideal authenticated-confidential pipes.  For traffic between
two honest endpoints the adversary only learns message lengths and timing;
it may still drop, delay or replay such messages.  Rewriting or injecting
content requires a statically corrupted sender.

Delivery is synchronous: :meth:`Network.request` pushes one frame through
the adversary to its destination, then pushes the destination's reply back
the same way.  Time only moves when a scenario says so.
"""

from __future__ import annotations

import logging
import random
import shlex
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from .asession import (HS_INIT, HS_RESP, INITIATOR, RESPONDER, TASK_REQ, TASK_RESP, TERMINAL,
                       HandshakeInit, NonceRegistry, SessionSummary, Status, TaskMsg,
                       TerminalMsg, TrustAnchors, close, handle_request, handle_response,
                       initiate, parse_session_frame, respond, send_request)
from .csession import (CSessionResult, commit_static, delegate_dynamic, drive_csession,
                       last_response_router, new_csession, plan_dynamic, plan_static)
from .encoding import EncodingError, decode, encode
from .errors import (MagiqError, PreconditionError, ProtocolError, ScenarioParseError,
                     UnknownIdentity)
from .crypto import chain_build, hmac
from .crypto.chain import NextTok
from .identity import Agent, CertificateAuthority, KeyDirectory, User
from .policy import PolicyFile, match_rcp, parse_policy_text, uid_of
from .provider import (DISCOVER, REGISTER_AGENT, REGISTER_USER, UPDATE_POLICY, Provider,
                       ProviderClient, serve, verify_authorization)

log = logging.getLogger(__name__)

PROVIDER_ID = "provider"


class SimClock:
    """Integer logical clock; only the harness advances it."""

    def __init__(self, tick: int = 0):
        if tick < 0:
            raise ValueError("clock starts at a non-negative tick")
        self._tick = tick

    def read(self) -> int:
        return self._tick

    def advance(self, k: int = 1) -> int:
        if k < 1:
            raise ValueError("advance needs k >= 1")
        self._tick += k
        return self._tick


class SecureChannel:
    """FIFO per direction between two registered identities."""

    def __init__(self, a: str, b: str):
        self.endpoints = (a, b)
        self._queues = {a: deque(), b: deque()}

    def _peer(self, who: str) -> str:
        a, b = self.endpoints
        if who not in self.endpoints:
            raise UnknownIdentity(f"{who} is not an endpoint of this channel")
        return b if who == a else a

    def send(self, sender: str, data: bytes) -> None:
        self._queues[self._peer(sender)].append(bytes(data))

    def recv(self, receiver: str) -> bytes | None:
        self._peer(receiver)
        q = self._queues[receiver]
        return q.popleft() if q else None

    def pending(self, receiver: str) -> int:
        return len(self._queues[receiver])


# -- adversary ------------------------------------------------------------------

ACTIONS = ("deliver", "drop", "delay", "replay", "mutate", "inject")


@dataclass(frozen=True)
class Action:
    kind: str
    k: int = 0               # delay ticks / replayed message index
    path: tuple[int, ...] = ()
    data: bytes = b""

    def __post_init__(self):
        if self.kind not in ACTIONS:
            raise ScenarioParseError(f"unknown adversary action {self.kind!r}")

    def describe(self) -> str:
        if self.kind == "delay":
            return f"delay {self.k}"
        if self.kind == "replay":
            return f"replay {self.k}"
        if self.kind == "mutate":
            return f"mutate {'.'.join(map(str, self.path))} {self.data.hex()}"
        if self.kind == "inject":
            return f"inject {self.data.hex()}"
        return self.kind


def parse_action(tokens: list[str]) -> Action:
    kind = tokens[0]
    try:
        if kind in ("deliver", "drop") and len(tokens) == 1:
            return Action(kind)
        if kind in ("delay", "replay") and len(tokens) == 2:
            return Action(kind, k=int(tokens[1]))
        if kind == "mutate" and len(tokens) == 3:
            return Action(kind, path=tuple(int(x) for x in tokens[1].split(".")),
                          data=bytes.fromhex(tokens[2]))
        if kind == "inject" and len(tokens) == 2:
            return Action(kind, data=bytes.fromhex(tokens[1]))
    except ValueError as exc:
        raise ScenarioParseError(f"bad adversary action {' '.join(tokens)!r}: {exc}") from None
    raise ScenarioParseError(f"bad adversary action {' '.join(tokens)!r}")


def replace_field(body: bytes, path: tuple[int, ...], new: bytes) -> bytes:
    """Swap the field at ``path`` (indices into nested encodings) for ``new``."""
    fields = decode(body)
    i = path[0]
    if not 0 <= i < len(fields):
        raise EncodingError(f"field {i} out of range")
    fields[i] = new if len(path) == 1 else replace_field(fields[i], path[1:], new)
    return encode(*fields)


def frame_fields(data: bytes, depth: int = 1) -> list[tuple[int, ...]]:
    """Every field path of a framed message down to ``depth`` levels."""

    def walk(body: bytes, prefix: tuple[int, ...], level: int):
        try:
            fields = decode(body)
        except EncodingError:
            return
        for i, f in enumerate(fields):
            yield prefix + (i,)
            if level < depth:
                yield from walk(f, prefix + (i,), level + 1)

    return list(walk(data[1:], (), 1))


def get_field(data: bytes, path: tuple[int, ...]) -> bytes:
    body = data[1:]
    for i in path:
        body = decode(body)[i]
    return body


def mutate_frame(data: bytes, path: tuple[int, ...], new: bytes) -> bytes:
    return data[:1] + replace_field(data[1:], path, new)


@dataclass
class Message:
    idx: int
    tick: int
    src: str
    dst: str
    data: bytes
    origin: str = "sent"  # sent | replay | inject
    fate: str = "delivered"

    @property
    def tag(self) -> int:
        return self.data[0] if self.data else -1


@dataclass(frozen=True)
class Event:
    tick: int
    entity: str
    sid: str
    kind: str
    detail: str = ""
    accountable: str | None = None

    def encode(self) -> bytes:
        return encode("event", self.tick, self.entity, self.sid, self.kind, self.detail,
                      self.accountable or "")


class Entity(Protocol):
    def handle_frame(self, src: str, data: bytes) -> bytes | None: ...


class Network:
    def __init__(self, clock: SimClock | None = None, *, corrupted=(),
                 adversary: dict[int, list[Action]] | None = None):
        self.clock = clock or SimClock()
        self.directory = KeyDirectory()
        self.entities: dict[str, Entity] = {}
        self.channels: dict[tuple[str, str], SecureChannel] = {}
        self.corrupted = set(corrupted)
        self.adversary = {k: list(v) for k, v in (adversary or {}).items()}
        self.messages: list[Message] = []
        self.observations: list[tuple] = []
        self.events: list[Event] = []
        self._replays: deque[int] = deque()
        self._depth = 0

    def register(self, identity: str, pk: bytes, entity: Entity) -> None:
        if not self.directory.register(identity, pk):
            raise UnknownIdentity(f"{identity} already registered with another key")
        self.entities.setdefault(identity, entity)

    def channel_open(self, a: str, b: str) -> SecureChannel:
        for x in (a, b):
            if x not in self.directory:
                raise UnknownIdentity(f"{x} is not in the key directory")
        key = tuple(sorted((a, b)))
        ch = self.channels.get(key)
        if ch is None:
            ch = self.channels[key] = SecureChannel(a, b)
        return ch

    def event(self, entity: str, sid, kind: str, detail: str = "",
              accountable: str | None = None) -> None:
        sid = sid.hex() if isinstance(sid, (bytes, bytearray)) else (sid or "")
        self.events.append(Event(self.clock.read(), entity, sid, kind, detail, accountable))

    def _observe(self, msg: Message, note: str = "") -> None:
        if msg.src in self.corrupted or msg.dst in self.corrupted:
            self.observations.append((msg.idx, msg.tick, msg.src, msg.dst, len(msg.data),
                                      msg.data.hex(), note))
        else:
            self.observations.append((msg.idx, msg.tick, msg.src, msg.dst, len(msg.data), note))

    def _transmit(self, src: str, dst: str, data: bytes, origin: str = "sent") -> bytes | None:
        """Carry one frame across its channel, applying any scripted actions."""
        ch = self.channel_open(src, dst)
        msg = Message(len(self.messages), self.clock.read(), src, dst, bytes(data), origin)
        self.messages.append(msg)
        ch.send(src, data)
        self._observe(msg)
        out = data
        for act in self.adversary.get(msg.idx, []):
            if act.kind == "drop":
                out = None
            elif act.kind == "delay":
                self.clock.advance(act.k)
            elif act.kind == "replay":
                self._replays.append(act.k)
            elif act.kind in ("mutate", "inject"):
                if src not in self.corrupted:
                    self._observe(msg, f"refused {act.kind}: honest sender")
                    continue
                try:
                    out = act.data if act.kind == "inject" else mutate_frame(out, act.path,
                                                                             act.data)
                except (EncodingError, IndexError):
                    out = act.data
        got = ch.recv(dst)
        if out is None:
            msg.fate = "dropped"
            return None
        if out != got:
            msg.fate = "modified"
        return out

    def request(self, src: str, dst: str, data: bytes) -> bytes | None:
        """Send a frame and return the (possibly tampered) reply, if any."""
        self._depth += 1
        try:
            delivered = self._transmit(src, dst, data)
            reply = None
            if delivered is not None:
                out = self.entities[dst].handle_frame(src, delivered)
                if out is not None:
                    reply = self._transmit(dst, src, out)
            if self._depth == 1:
                self._run_replays()
            return reply
        finally:
            self._depth -= 1

    def _run_replays(self) -> None:
        while self._replays:
            j = self._replays.popleft()
            if not 0 <= j < len(self.messages):
                continue
            orig = self.messages[j]
            delivered = self._transmit(orig.src, orig.dst, orig.data, origin="replay")
            if delivered is None:
                continue
            out = self.entities[orig.dst].handle_frame(orig.src, delivered)
            if out is not None:
                back = self._transmit(orig.dst, orig.src, out, origin="replay")
                if back is not None:
                    self.entities[orig.src].handle_frame(orig.dst, back)

    def corrupted_view(self) -> list[tuple]:
        return list(self.observations)


# -- entities ---------------------------------------------------------------------

class ProviderService:
    def __init__(self, provider: Provider):
        self.provider = provider

    def handle_frame(self, src: str, data: bytes) -> bytes | None:
        return serve(self.provider, data)


def _role_of_tag(tag: int) -> str:
    return INITIATOR if tag in (HS_INIT, TASK_REQ) else RESPONDER


class AgentRuntime:
    """One agent's session endpoint: routes frames to sessions by sid.

    A frame that names no live session, or cannot be parsed, is rejected and
    blamed on the role that would have sent it; no session is aborted.
    """

    def __init__(self, agent: Agent, net: Network, anchors: TrustAnchors, *,
                 executor: Callable[[bytes], bytes] = lambda p: p, rng=None):
        self.agent = agent
        self.id = agent.aid
        self.net = net
        self.anchors = anchors
        self.executor = executor
        self.rng = rng
        self.nonces = NonceRegistry()
        self.seen_ots: set = set()
        self.sessions: dict[bytes, object] = {}
        self.transcripts: dict[bytes, list[bytes]] = {}
        self.executed = 0
        self.exec_log: list[tuple[int, bytes]] = []  # (tick, sid) of every executed request
        self.skip_rounds: set[int] = set()  # corrupted responder: discard a token first

    # frames from the network
    def handle_frame(self, src: str, data: bytes) -> bytes | None:
        if not data or data[0] not in (HS_INIT, HS_RESP, TASK_REQ, TASK_RESP, TERMINAL):
            self.net.event(self.id, b"", "reject", "unexpected frame", self._peer_role(src, None))
            return None
        role = self._peer_role(src, data[0])
        try:
            msg = parse_session_frame(data, role)
        except ProtocolError as exc:
            self.net.event(self.id, b"", "reject", exc.name, exc.accountable)
            return None
        if isinstance(msg, HandshakeInit):
            return self._on_handshake(msg, data)
        state = self.sessions.get(bytes(msg.sid))
        if state is None or state.status in (Status.CLOSED, Status.ABORTED, Status.EXPIRED,
                                             Status.EXHAUSTED):
            why = "unknown session" if state is None else f"session {state.status.value}"
            self.net.event(self.id, msg.sid, "reject", why, _role_of_tag(data[0]))
            return None
        self.transcripts[bytes(state.sid)].append(bytes(data))
        if state.role == RESPONDER:
            return self._on_request(state, msg)
        self._on_response(state, msg)
        return None

    def _peer_role(self, src: str, tag: int | None) -> str | None:
        """Role the sender plays towards us: from live sessions, else from the frame type."""
        for state in reversed(list(self.sessions.values())):
            if state.peer_aid == src:
                return state.peer_role
        return None if tag is None else _role_of_tag(tag)

    def _on_handshake(self, m0: HandshakeInit, raw: bytes) -> bytes | None:
        try:
            rcp = match_rcp(self.agent.rcp, self.id, m0.info.aid)
            m1, state = respond(self.agent, m0, rcp, self.net.clock, self.anchors, self.nonces,
                                executor=lambda p: self._exec(p, m0.sid), rng=self.rng,
                                seen_ots=self.seen_ots)
        except ProtocolError as exc:
            self.net.event(self.id, m0.sid, "reject", exc.name, exc.accountable)
            return None
        except MagiqError as exc:
            self.net.event(self.id, m0.sid, "reject", exc.name, INITIATOR)
            return None
        self.sessions[bytes(state.sid)] = state
        frame_out = m1.to_frame()
        self.transcripts[bytes(state.sid)] = [bytes(raw), frame_out]
        self.net.event(self.id, state.sid, "open", f"q={state.q} delta={state.delta}")
        return frame_out

    def _exec(self, payload: bytes, sid: bytes = b"") -> bytes:
        self.executed += 1
        self.exec_log.append((self.net.clock.read(), bytes(sid)))
        return self.executor(payload)

    def _on_request(self, state, msg) -> bytes | None:
        skip = self.id in self.net.corrupted and state.requests_executed + 1 in self.skip_rounds
        try:
            resp = handle_request(state, msg, self.net.clock,
                                  executor=lambda p: self._exec(p, state.sid))
        except ProtocolError as exc:
            self.net.event(self.id, state.sid, state.cause or "abort", exc.name, exc.accountable)
            notice = exc.info.get("notice")
            if notice is not None:
                out = notice.to_frame()
                self.transcripts[bytes(state.sid)].append(out)
                return out
            return None
        except MagiqError as exc:
            self.net.event(self.id, state.sid, "reject", exc.name, INITIATOR)
            return None
        if skip and state.ctr_own > 0:
            # answer with the token after the one just opened
            resp = TaskMsg(state.sid, TASK_RESP, resp.payload, state.own.open_next(),
                           resp.tok_peer_echo)
            resp = TaskMsg(**{**resp.__dict__, "tag": hmac(state.k_ses, resp.mac_input())})
        out = resp.to_frame()
        self.transcripts[bytes(state.sid)].append(out)
        return out

    def _on_response(self, state, msg) -> None:
        try:
            handle_response(state, msg, self.net.clock)
            self.net.event(self.id, state.sid, "response", f"#{state.responses_accepted}")
        except ProtocolError as exc:
            self.net.event(self.id, state.sid, state.cause or "abort", exc.name, exc.accountable)
        except MagiqError as exc:
            self.net.event(self.id, state.sid, "local", exc.name)

    # initiator side
    def provider_client(self) -> ProviderClient:
        return ProviderClient(lambda d: self.net.request(self.id, PROVIDER_ID, d))

    def discover(self, aid_r: str):
        auth = self.provider_client().discover(self.id, aid_r)
        if not verify_authorization(auth, self.anchors.pk_ta, aid_r, self.anchors.ca_pk,
                                    self.anchors.tls_pk_ta, self.id):
            raise ProtocolError("provider grant does not verify", accountable="provider")
        return auth

    def open_session(self, aid_r: str, q: int, delta: int, task_digest: bytes,
                     payload: bytes, *, chains=None, commitment=None):
        auth = self.discover(aid_r)
        m0, state = initiate(self.agent, auth, q, delta, self.net.clock,
                             task_digest=task_digest, payload=payload, rng=self.rng,
                             chains=chains, commitment=commitment)
        self.last_handshake = m0
        sid = bytes(state.sid)
        self.sessions[sid] = state
        self.transcripts[sid] = [m0.to_frame()]
        self.net.event(self.id, sid, "initiate", f"q={q} delta={delta}")
        reply = self.net.request(self.id, aid_r, m0.to_frame())
        if reply is not None:
            self.handle_frame(aid_r, reply)
        return state

    def next_request(self, state, payload: bytes) -> bool:
        try:
            msg = send_request(state, payload, self.net.clock)
        except MagiqError as exc:
            self.net.event(self.id, state.sid, "local", exc.name)
            return False
        frame_out = msg.to_frame()
        self.transcripts[bytes(state.sid)].append(frame_out)
        reply = self.net.request(self.id, state.peer_aid, frame_out)
        if reply is not None:
            self.handle_frame(state.peer_aid, reply)
        return True

    def close_session(self, sid: bytes) -> SessionSummary | None:
        state = self.sessions.get(bytes(sid))
        return None if state is None else close(state)


# -- scenarios ----------------------------------------------------------------------

@dataclass
class SessionStep:
    initiator: str
    responder: str
    q: int
    delta: int
    requests: int
    payload: str = "task"
    task: str = "task"
    gap: int = 0  # clock ticks between rounds
    # misbehaviour of a corrupted initiator (ignored for honest agents)
    extra: int = 0  # requests pushed past the budget
    skip: int = 0  # round before which one own token is silently discarded
    reuse: bool = False  # recycle the previous session's chain and commitment


@dataclass
class CSessionStep:
    orchestrator: str
    mode: str
    responders: list[str]
    rounds: int
    task: str = "ctask"
    qcap: int | None = None
    picks: int = 0
    gap: int = 0
    reuse_ots: bool = False  # corrupted orchestrator signs every chain with delegated key 0


@dataclass
class AdvanceStep:
    k: int


@dataclass
class AgentDecl:
    aid: str
    endpoint: str
    policy: PolicyFile


@dataclass
class Scenario:
    name: str = "scenario"
    seed: int = 0
    heights: dict[str, int] = field(default_factory=lambda: {
        "ca": 6, "user": 5, "agent": 4, "provider": 8})
    users: list[str] = field(default_factory=list)
    agents: list[AgentDecl] = field(default_factory=list)
    corrupt: set[str] = field(default_factory=set)
    steps: list = field(default_factory=list)
    adversary: dict[int, list[Action]] = field(default_factory=dict)


def _kv(tokens: list[str], lineno: int) -> dict[str, str]:
    out = {}
    for t in tokens:
        if "=" not in t:
            raise ScenarioParseError(f"line {lineno}: expected key=value, got {t!r}")
        k, v = t.split("=", 1)
        out[k] = v
    return out


def _int(v: str, lineno: int) -> int:
    try:
        return int(v)
    except ValueError:
        raise ScenarioParseError(f"line {lineno}: {v!r} is not an integer") from None


def parse_scenario(text: str, base_dir=".", name: str = "scenario") -> Scenario:
    """Parse the line-oriented scenario format (see ``scenarios/README``)."""
    sc = Scenario(name=name)
    base = Path(base_dir)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = shlex.split(line)
        kind, args = tok[0], tok[1:]
        try:
            if kind == "seed" and len(args) == 1:
                sc.seed = _int(args[0], lineno)
            elif kind == "heights":
                for k, v in _kv(args, lineno).items():
                    if k not in sc.heights:
                        raise ScenarioParseError(f"line {lineno}: unknown height {k!r}")
                    sc.heights[k] = _int(v, lineno)
            elif kind == "user" and len(args) == 1:
                sc.users.append(args[0])
            elif kind == "agent" and len(args) in (2, 4):
                pol = PolicyFile()
                if len(args) == 4:
                    if args[2] == "policy":
                        pol = parse_policy_text((base / args[3]).read_text())
                    elif args[2] == "rules":
                        pol = parse_policy_text(args[3].replace(";", "\n"))
                    else:
                        raise ScenarioParseError(f"line {lineno}: expected policy or rules")
                sc.agents.append(AgentDecl(args[0], args[1], pol))
            elif kind == "corrupt" and len(args) == 1:
                sc.corrupt.add(args[0])
            elif kind == "session" and len(args) >= 3 and args[1] == "->":
                kv = _kv(args[3:], lineno)
                q = _int(kv.pop("q", "3"), lineno)
                sc.steps.append(SessionStep(
                    args[0], args[2], q, _int(kv.pop("delta", "100"), lineno),
                    _int(kv.pop("requests", str(q)), lineno),
                    kv.pop("payload", "task"), kv.pop("task", "task"),
                    _int(kv.pop("gap", "0"), lineno), _int(kv.pop("extra", "0"), lineno),
                    _int(kv.pop("skip", "0"), lineno), kv.pop("reuse", "0") == "1"))
                if kv:
                    raise ScenarioParseError(f"line {lineno}: unknown keys {sorted(kv)}")
            elif kind == "csession" and len(args) >= 3:
                kv = _kv(args[3:], lineno)
                if args[1] not in ("static", "dynamic"):
                    raise ScenarioParseError(f"line {lineno}: mode must be static or dynamic")
                step = CSessionStep(args[0], args[1], args[2].split(","),
                                    _int(kv.pop("rounds", "1"), lineno), kv.pop("task", "ctask"))
                if "qcap" in kv:
                    step.qcap = _int(kv.pop("qcap"), lineno)
                step.picks = _int(kv.pop("picks", str(len(step.responders))), lineno)
                step.gap = _int(kv.pop("gap", "0"), lineno)
                step.reuse_ots = kv.pop("reuse_ots", "0") == "1"
                if kv:
                    raise ScenarioParseError(f"line {lineno}: unknown keys {sorted(kv)}")
                sc.steps.append(step)
            elif kind == "advance" and len(args) == 1:
                sc.steps.append(AdvanceStep(_int(args[0], lineno)))
            elif kind == "on" and len(args) >= 2:
                sc.adversary.setdefault(_int(args[0], lineno), []).append(parse_action(args[1:]))
            else:
                raise ScenarioParseError(f"line {lineno}: cannot parse {line!r}")
        except ScenarioParseError as exc:
            if str(exc).startswith("line "):
                raise
            raise ScenarioParseError(f"line {lineno}: {exc}") from None
        except (MagiqError, OSError) as exc:
            raise ScenarioParseError(f"line {lineno}: {exc}") from None
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), path.parent, path.stem)


# -- run report -----------------------------------------------------------------------

@dataclass
class SessionRecord:
    initiator: str
    responder: str
    sid: str
    initiator_summary: SessionSummary | None
    responder_summary: SessionSummary | None
    executed: int
    error: str = ""
    first_message: int = -1


@dataclass
class RunReport:
    scenario: str
    seed: int
    messages: list[Message]
    events: list[Event]
    observations: list[tuple]
    sessions: list[SessionRecord]
    csessions: list[CSessionResult]
    counters: dict[tuple[str, str], int]
    final_tick: int
    transcripts: dict[str, list[bytes]] = field(default_factory=dict)

    def records(self) -> list[bytes]:
        out = [encode("run", self.scenario, self.seed, self.final_tick)]
        for m in self.messages:
            out.append(encode("msg", m.idx, m.tick, m.src, m.dst, m.origin, m.fate, m.data))
        out.extend(e.encode() for e in self.events)
        for s in self.sessions:
            out.append(encode("pair", s.initiator, s.responder, s.sid, s.executed, s.error))
            for summ in (s.initiator_summary, s.responder_summary):
                if summ is not None:
                    out.append(summ.encode())
        for c in self.csessions:
            out.extend(c.records())
        for (r, i), v in self.counters.items():
            out.append(encode("counter", r, i, v))
        return out

    def log_bytes(self) -> bytes:
        return encode(*self.records())

    def write(self, path) -> None:
        Path(path).write_bytes(self.log_bytes())

    def aborts(self) -> list[Event]:
        return [e for e in self.events if e.accountable is not None]

    def summary(self) -> str:
        lines = [f"scenario {self.scenario} seed={self.seed} ticks={self.final_tick} "
                 f"messages={len(self.messages)}"]
        for s in self.sessions:
            i, r = s.initiator_summary, s.responder_summary
            lines.append(
                f"session {s.initiator} -> {s.responder}: executed={s.executed} "
                f"initiator={i.cause if i else '-'} responder={r.cause if r else '-'}"
                + (f" error={s.error}" if s.error else ""))
        for c in self.csessions:
            lines.append(f"csession {c.orchestrator_aid} {c.mode}: ctr_global={c.ctr_global}/"
                         f"{c.q_tot} consumed={c.consumed} components={len(c.summaries)}"
                         + (f" halted={c.halted}" if c.halted else ""))
        for e in self.aborts():
            lines.append(f"reject t={e.tick} at {e.entity}: {e.detail} "
                         f"(accountable: {e.accountable})")
        return "\n".join(lines) + "\n"


# -- the world --------------------------------------------------------------------------

class World:
    """Everything a scenario needs: CA, Provider, users, agents, runtimes, network."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        self.random = random.Random(sc.seed)
        rng = self.random.randbytes
        self.rng = rng
        self.clock = SimClock()
        self.net = Network(self.clock, corrupted=sc.corrupt, adversary=sc.adversary)
        h = sc.heights
        self.ca = CertificateAuthority(h["ca"], rng=rng)
        self.provider = Provider(self.ca.pk, height=h["provider"], rng=rng)
        self.net.register(PROVIDER_ID, self.provider.pk, ProviderService(self.provider))
        self.anchors = TrustAnchors(self.ca.pk, self.provider.pk, self.provider.tls_pk)
        self.users: dict[str, User] = {}
        self.runtimes: dict[str, AgentRuntime] = {}
        self.sessions: list[SessionRecord] = []
        self.csessions: list[CSessionResult] = []

    def setup(self) -> None:
        for uid in self.sc.users:
            self.add_user(uid)
        for decl in self.sc.agents:
            self.add_agent(decl)

    def add_user(self, uid: str) -> User:
        user = User.create(uid, self.ca, height=self.sc.heights["user"], rng=self.rng)
        self.users[uid] = user
        self.net.register(uid, user.pk, _Silent())
        client = ProviderClient(lambda d: self.net.request(uid, PROVIDER_ID, d))
        try:
            client.register_user(uid, user.pwd, user.cert)
        except MagiqError as exc:
            self.net.event(uid, b"", "refused", exc.name)
        return user

    def add_agent(self, decl: AgentDecl) -> AgentRuntime:
        owner = self.users.get(uid_of(decl.aid))
        if owner is None:
            raise ScenarioParseError(f"agent {decl.aid} declared before its user")
        name = decl.aid.rsplit(":", 1)[1]
        agent = Agent.create(owner, name, decl.endpoint, self.ca, self.provider.tls_pk,
                             self.provider.pk, cp=decl.policy.cp,
                             height=self.sc.heights["agent"], rng=self.rng)
        agent.rcp = list(decl.policy.rcp)
        agent.icp = list(decl.policy.icp)
        rt = AgentRuntime(agent, self.net, self.anchors, executor=_stub_executor, rng=self.rng)
        self.net.register(agent.aid, agent.pk, rt)
        self.runtimes[agent.aid] = rt
        client = ProviderClient(lambda d: self.net.request(owner.uid, PROVIDER_ID, d))
        try:
            agent.sig_ta = client.register_agent(agent)
        except MagiqError as exc:
            self.net.event(agent.aid, b"", "refused", exc.name)
        return rt

    # steps
    def run_step(self, step) -> None:
        if isinstance(step, AdvanceStep):
            self.clock.advance(step.k)
        elif isinstance(step, SessionStep):
            self.run_session(step)
        elif isinstance(step, CSessionStep):
            self.run_csession(step)

    def run_session(self, st: SessionStep) -> SessionRecord:
        rt_i = self.runtimes.get(st.initiator)
        rt_r = self.runtimes.get(st.responder)
        if rt_i is None or rt_r is None:
            raise ScenarioParseError(f"session names an undeclared agent")
        before = rt_r.executed
        first = len(self.net.messages)
        task = encode("task", st.task)
        corrupt = st.initiator in self.net.corrupted
        chains = commitment = None
        prev = getattr(rt_i, "last_handshake", None)
        if corrupt and st.reuse and prev is not None:
            # rebuild the old session's chain; the user signature on it stays valid
            chains = [chain_build(rt_i.agent.seed_key, prev.sid, rt_i.id, prev.responder_aid,
                                  0, prev.commitment.n)]
            commitment = prev.commitment
        try:
            state = rt_i.open_session(st.responder, st.q, st.delta, task,
                                      f"{st.payload}#001".encode(), chains=chains,
                                      commitment=commitment)
        except MagiqError as exc:
            if isinstance(exc, ProtocolError):
                who = exc.accountable
            elif 30 <= exc.code < 40:
                who = INITIATOR  # the Provider turned the initiator's request down
            else:
                who = None
            self.net.event(st.initiator, b"", "refused", exc.name, who)
            rec = SessionRecord(st.initiator, st.responder, "", None, None, 0, exc.name, first)
            self.sessions.append(rec)
            return rec
        for i in range(2, st.requests + 1):
            if state.status != Status.OPEN or state.awaiting:
                break
            if st.gap:
                self.clock.advance(st.gap)
            if corrupt and st.skip == i and state.ctr_own > 0:
                state.own.open_next()
            if not rt_i.next_request(state, f"{st.payload}#{i:03d}".encode()):
                break
        if st.extra and st.initiator in self.net.corrupted:
            self._overrun(rt_i, state, st)
        sid = bytes(state.sid)
        rec = SessionRecord(st.initiator, st.responder, sid.hex(), rt_i.close_session(sid),
                            rt_r.close_session(sid), rt_r.executed - before, first_message=first)
        self.sessions.append(rec)
        return rec

    def _overrun(self, rt_i: AgentRuntime, state, st: SessionStep) -> None:
        """A corrupted initiator keeps sending after its budget: forged-but-MAC'd requests."""
        last = state.own.last_value
        for k in range(st.extra):
            tok = NextTok(0, last)
            msg = TaskMsg(state.sid, TASK_REQ, f"{st.payload}#over{k}".encode(), tok,
                          state.peer.head if state.peer else b"")
            msg = TaskMsg(**{**msg.__dict__, "tag": hmac(state.k_ses, msg.mac_input())
                             if state.k_ses else b""})
            reply = self.net.request(rt_i.id, st.responder, msg.to_frame())
            if reply is not None:
                rt_i.handle_frame(st.responder, reply)

    def run_csession(self, st: CSessionStep) -> CSessionResult:
        rt = self.runtimes[st.orchestrator]
        agent = rt.agent
        if not agent.icp:
            raise ScenarioParseError(f"{st.orchestrator} has no icp entry for a C-session")
        icp = agent.icp[0]
        task_digest = encode("task", st.task)
        cstate = new_csession(agent.aid, icp, self.clock, q_tot=st.qcap)
        if st.mode == "static":
            plan = plan_static(task_digest, st.responders, icp)
            commitment = commit_static(plan, agent, rng=self.rng)
        else:
            plan = plan_dynamic(task_digest, icp, last_response_router(st.responders, st.picks))
            commitment = delegate_dynamic(icp.chain_count, icp.chain_len, agent.owner,
                                          q_tot=icp.q_tot, rng=self.rng)

        def task(aid, last, rnd):
            if rnd > st.rounds:
                return None
            if rnd > 1 and st.gap:
                self.clock.advance(st.gap)
            return f"{st.task}@{aid}#{rnd}".encode()

        def exchange(aid, data):
            return self.net.request(agent.aid, aid, data)

        discover = rt.discover
        if st.reuse_ots and st.mode == "dynamic" and agent.aid in self.net.corrupted:
            def discover(aid, _dc=commitment):
                # a corrupted orchestrator rewinds its delegated-key state
                _dc.used_index = 0
                _dc.ots_batch[0].used = False
                return rt.discover(aid)

        result = drive_csession(cstate, plan, agent, commitment, discover=discover,
                                exchange=exchange, task=task, clock=self.clock, rng=self.rng)
        for s in cstate.sessions:
            peer = self.runtimes.get(s.peer_aid)
            if peer is not None:
                peer.close_session(bytes(s.sid))
        self.csessions.append(result)
        return result

    def report(self) -> RunReport:
        transcripts = {}
        for rt in self.runtimes.values():
            for sid, frames in rt.transcripts.items():
                transcripts.setdefault(sid.hex(), frames)
        counters = {k: v.remaining for k, v in self.provider.counters.items()}
        return RunReport(self.sc.name, self.sc.seed, list(self.net.messages),
                         list(self.net.events), list(self.net.observations), list(self.sessions),
                         list(self.csessions), counters, self.clock.read(), transcripts)


class _Silent:
    def handle_frame(self, src: str, data: bytes) -> bytes | None:
        return None


def _stub_executor(payload: bytes) -> bytes:
    """Deterministic stand-in for task execution."""
    return b"done:" + payload


def run_scenario(sc: Scenario, seed: int | None = None) -> RunReport:
    """Run a scenario to completion; a pure function of (scenario, seed)."""
    if seed is not None:
        sc = Scenario(**{**sc.__dict__, "seed": seed})
    world = World(sc)
    world.setup()
    for step in sc.steps:
        world.run_step(step)
    return world.report()


# -- bandwidth ----------------------------------------------------------------------

PHASES = {REGISTER_USER: "user-registration", REGISTER_AGENT: "agent-registration",
          UPDATE_POLICY: "policy-update", DISCOVER: "session-establishment",
          HS_INIT: "session-establishment", HS_RESP: "session-establishment",
          TASK_REQ: "request", TASK_RESP: "request", TERMINAL: "request"}


@dataclass
class BandwidthReport:
    phases: dict[str, int]
    per_session_establishment: list[int]
    per_request: list[list[int]]  # per session, bytes of each later round (request + response)

    def rows(self) -> list[tuple[str, int, int]]:
        out = [(name, 0, total) for name, total in self.phases.items()]
        for s, rounds in enumerate(self.per_request):
            out.append(("establishment", s, self.per_session_establishment[s]))
            for r, b in enumerate(rounds, 2):
                out.append((f"round-{r}", s, b))
        return out


def measure_bandwidth(report: RunReport) -> BandwidthReport:
    """Sum frame lengths per protocol phase from a run's message log."""
    phases: dict[str, int] = {}
    for m in report.messages:
        if m.fate == "dropped":
            continue
        ph = PHASES.get(m.tag, "other")
        phases[ph] = phases.get(ph, 0) + len(m.data)
    est, rounds = [], []
    bounds = [s.first_message for s in report.sessions] + [len(report.messages)]
    for k, s in enumerate(report.sessions):
        msgs = [m for m in report.messages[bounds[k]:bounds[k + 1]]
                if m.origin == "sent" and m.fate != "dropped"]
        est.append(sum(len(m.data) for m in msgs
                       if m.tag in (DISCOVER, HS_INIT, HS_RESP)))
        per: list[int] = []
        for m in msgs:
            if m.tag == TASK_REQ:
                per.append(len(m.data))
            elif m.tag in (TASK_RESP, TERMINAL) and per:
                per[-1] += len(m.data)
        rounds.append(per)
    return BandwidthReport(phases, est, rounds)
