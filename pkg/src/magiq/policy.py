"""Contact policies (CP), responder/initiator session policies (RCP/ICP).

Agent ids follow ``user@domain:name``.  Contact rule patterns come in three
classes of decreasing specificity: an exact aid, a domain wildcard
``*@domain:name`` and the global ``*``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .encoding import decode, encode, to_int, to_str
from .errors import MalformedAid, PolicyParseError, PreconditionError, TooManyResponders

_AID = re.compile(r"^(?P<user>[^@:\s*]+)@(?P<domain>[^@:\s*]+):(?P<name>[^@:\s*]+)$")
_DOMAIN_PATTERN = re.compile(r"^\*@(?P<domain>[^@:\s*]+):(?P<name>[^@:\s*]+)$")

SEND = "send"
RECEIVE = "receive"

NO_MATCH = -1


class Specificity(int, Enum):
    GLOBAL = 0
    DOMAIN = 1
    EXACT = 2


def parse_aid(aid: str) -> tuple[str, str, str]:
    m = _AID.match(aid)
    if not m:
        raise MalformedAid(f"agent id {aid!r} is not of the form user@domain:name")
    return m["user"], m["domain"], m["name"]


def uid_of(aid: str) -> str:
    user, domain, _ = parse_aid(aid)
    return f"{user}@{domain}"


def pattern_class(pattern: str) -> Specificity:
    if pattern == "*":
        return Specificity.GLOBAL
    if _DOMAIN_PATTERN.match(pattern):
        return Specificity.DOMAIN
    if _AID.match(pattern):
        return Specificity.EXACT
    raise PolicyParseError(f"pattern {pattern!r} is not exact, *@domain:name or *")


def pattern_matches(pattern: str, aid: str) -> bool:
    cls = pattern_class(pattern)
    if cls is Specificity.GLOBAL:
        return True
    if cls is Specificity.EXACT:
        return pattern == aid
    _, domain, name = parse_aid(aid)
    return pattern == f"*@{domain}:{name}"


@dataclass(frozen=True)
class ContactRule:
    direction: str
    pattern: str
    budget: int

    def __post_init__(self):
        if self.direction not in (SEND, RECEIVE):
            raise PolicyParseError(f"direction must be send or receive, got {self.direction!r}")
        if self.budget < 0:
            raise PolicyParseError("budget must be non-negative")
        pattern_class(self.pattern)

    @property
    def specificity(self) -> Specificity:
        return pattern_class(self.pattern)

    def encode(self) -> bytes:
        return encode(self.direction, self.pattern, self.budget)


@dataclass(frozen=True)
class ContactPolicy:
    rules: tuple[ContactRule, ...] = ()

    def encode(self) -> bytes:
        return encode(*[r.encode() for r in self.rules])

    @classmethod
    def decode(cls, data: bytes) -> "ContactPolicy":
        rules = []
        for item in decode(data):
            d, p, b = decode(item)
            rules.append(ContactRule(to_str(d), to_str(p), to_int(b)))
        return cls(tuple(rules))


@dataclass(frozen=True)
class ResponderPolicy:
    responder_aid: str
    initiator_aid: str  # exact aid or a contact-rule pattern
    q: int
    delta: int

    def __post_init__(self):
        if self.q < 1 or self.delta < 1:
            raise PolicyParseError("RCP needs q >= 1 and delta >= 1")


@dataclass(frozen=True)
class InitiatorPolicy:
    initiator_aid: str
    q_tot: int
    delta_tot: int
    chain_count: int
    chain_len: int

    def __post_init__(self):
        if min(self.q_tot, self.delta_tot, self.chain_count, self.chain_len) < 1:
            raise PolicyParseError("ICP fields must all be positive")
        if self.q_tot != self.chain_count * self.chain_len:
            raise PolicyParseError(
                f"q_tot={self.q_tot} must equal m*n={self.chain_count * self.chain_len}")


def match_rule(policy: ContactPolicy, direction: str, peer_aid: str) -> ContactRule | None:
    """Most specific matching rule; first declared wins among equals."""
    parse_aid(peer_aid)
    best = None
    for rule in policy.rules:
        if rule.direction != direction or not pattern_matches(rule.pattern, peer_aid):
            continue
        if best is None or rule.specificity > best.specificity:
            best = rule
    return best


def budget(policy: ContactPolicy, direction: str, peer_aid: str) -> int:
    rule = match_rule(policy, direction, peer_aid)
    return NO_MATCH if rule is None else rule.budget


def resolve_budget(cp_r: ContactPolicy, cp_i: ContactPolicy, aid_r: str, aid_i: str) -> int:
    """Number of A-sessions the pair may open; -1 when either side has no rule."""
    b_r = budget(cp_r, RECEIVE, aid_i)
    b_i = budget(cp_i, SEND, aid_r)
    if b_r == NO_MATCH or b_i == NO_MATCH:
        return NO_MATCH
    return min(b_r, b_i)


def effective_session_policy(q_i: int, delta_i: int, q_r: int, delta_r: int) -> tuple[int, int]:
    if min(q_i, delta_i, q_r, delta_r) < 1:
        raise PreconditionError("session budgets must be positive")
    return min(q_i, q_r), min(delta_i, delta_r)


def match_rcp(entries, responder_aid: str, initiator_aid: str) -> ResponderPolicy | None:
    best = None
    for e in entries:
        if e.responder_aid != responder_aid or not pattern_matches(e.initiator_aid, initiator_aid):
            continue
        if best is None or pattern_class(e.initiator_aid) > pattern_class(best.initiator_aid):
            best = e
    return best


@dataclass(frozen=True)
class ChainAssignment:
    slot: int
    chains: tuple[int, ...]
    n: int

    @property
    def tokens(self) -> int:
        return len(self.chains) * self.n


def split_icp(icp: InitiatorPolicy, t: int) -> list[ChainAssignment]:
    """Deal the ``m`` chains round-robin over ``t`` planned responders."""
    if t < 1:
        raise PreconditionError("need at least one responder")
    if t > icp.chain_count:
        raise TooManyResponders(f"{t} responders but only {icp.chain_count} chains")
    slots: list[list[int]] = [[] for _ in range(t)]
    for c in range(icp.chain_count):
        slots[c % t].append(c)
    return [ChainAssignment(i, tuple(cs), icp.chain_len) for i, cs in enumerate(slots)]


@dataclass
class PolicyFile:
    cp: ContactPolicy = field(default_factory=ContactPolicy)
    rcp: list[ResponderPolicy] = field(default_factory=list)
    icp: list[InitiatorPolicy] = field(default_factory=list)


def _int(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise PolicyParseError(f"line {lineno}: {tok!r} is not an integer") from None


def parse_policy_text(text: str) -> PolicyFile:
    """Parse ``direction pattern budget`` / ``rcp …`` / ``icp …`` lines."""
    rules = []
    out = PolicyFile()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind in (SEND, RECEIVE):
                if len(parts) != 3:
                    raise PolicyParseError("expected: direction pattern budget")
                rules.append(ContactRule(kind, parts[1], _int(parts[2], lineno)))
            elif kind == "rcp":
                if len(parts) != 5:
                    raise PolicyParseError("expected: rcp responder initiator q delta")
                parse_aid(parts[1])
                out.rcp.append(ResponderPolicy(parts[1], parts[2], _int(parts[3], lineno),
                                               _int(parts[4], lineno)))
            elif kind == "icp":
                if len(parts) != 6:
                    raise PolicyParseError("expected: icp initiator q_tot delta_tot m n")
                parse_aid(parts[1])
                q, d, m, n = (_int(p, lineno) for p in parts[2:])
                out.icp.append(InitiatorPolicy(parts[1], q, d, m, n))
            else:
                raise PolicyParseError(f"unknown policy line kind {kind!r}")
        except (PolicyParseError, MalformedAid) as exc:
            raise PolicyParseError(f"line {lineno}: {exc}") from None
    out.cp = ContactPolicy(tuple(rules))
    return out


def load_policy_file(path) -> PolicyFile:
    return parse_policy_text(Path(path).read_text())
