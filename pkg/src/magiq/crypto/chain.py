"""Personalized hash chains used as message-count tokens.

Link ``j`` binds its position, the session id and the peer the chain is
spent towards::

    links[0] = PRF(key, sid, self_aid, peer_aid, addr)
    links[j] = H(links[j-1], j, sid, peer_aid)      for 1 <= j <= n

The terminal ``links[n]`` is committed to by a signature (or a Merkle root
over several terminals).  Tokens are opened from the top: the first
presentation reveals ``links[n-1]`` next to the terminal, every later message
reveals the next lower link.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..encoding import decode_exact, encode, to_int, to_opt
from ..errors import ZeroLength
from .hashing import Digest, ct_equal, hash_fields, prf


def link_hash(prev: bytes, index: int, sid: bytes, peer_aid: str) -> Digest:
    return hash_fields(prev, index, sid, peer_aid)


@dataclass(frozen=True)
class NextTok:
    index: int
    value: Digest
    terminal: Digest | None = None

    def encode(self) -> bytes:
        return encode(self.index, self.value, self.terminal)

    @classmethod
    def decode(cls, data: bytes) -> "NextTok":
        idx, val, term = decode_exact(data, 3)
        term = to_opt(term)
        return cls(to_int(idx), Digest(val), Digest(term) if term is not None else None)


@dataclass
class PersonalizedHashChain:
    seed: Digest
    length: int
    sid: bytes
    peer_aid: str
    addr: int
    links: list[Digest | None] = field(repr=False)
    terminal: Digest = field(init=False)

    def __post_init__(self):
        self.terminal = self.links[self.length]

    def token(self, index: int, first: bool = False) -> NextTok:
        """Token opening ``links[index]``; ``first`` attaches the terminal."""
        if not 0 <= index < self.length:
            raise IndexError(f"token index {index} outside chain of length {self.length}")
        value = self.links[index]
        if value is None:
            raise IndexError(f"link {index} was already revealed and deleted")
        return NextTok(index, value, self.terminal if first else None)

    def first_token(self) -> NextTok:
        return self.token(self.length - 1, first=True)

    def forget_above(self, index: int) -> None:
        """Delete stored links above ``index``; the peer already holds them."""
        for j in range(index + 1, self.length + 1):
            self.links[j] = None

    def retained(self) -> list[int]:
        return [j for j, v in enumerate(self.links) if v is not None]


def chain_build(key: bytes, sid: bytes, self_aid: str, peer_aid: str, addr: int,
                n: int) -> PersonalizedHashChain:
    if n < 1:
        raise ZeroLength(f"chain length must be >= 1, got {n}")
    seed = prf(key, sid, self_aid, peer_aid, addr)
    links = [seed]
    for j in range(1, n + 1):
        links.append(link_hash(links[-1], j, sid, peer_aid))
    return PersonalizedHashChain(seed, n, bytes(sid), peer_aid, addr, links)


def chain_verify_step(expected: bytes, tok: NextTok, sid: bytes, peer_aid: str) -> bool:
    """True iff ``tok.value`` hashes forward to ``expected`` at position ``tok.index+1``."""
    if tok.index < 0:
        return False
    return ct_equal(link_hash(tok.value, tok.index + 1, sid, peer_aid), expected)


def chain_verify_first(tok: NextTok, sid: bytes, peer_aid: str) -> bool:
    """Internal consistency of a first presentation ``(terminal, value)``."""
    if tok.terminal is None:
        return False
    return chain_verify_step(tok.terminal, tok, sid, peer_aid)


def chain_verify_seed(tok0: bytes, link1: bytes, sid: bytes, peer_aid: str, *,
                      prf_key: bytes | None = None, owner_aid: str | None = None,
                      addr: int = 0) -> bool:
    """Final check once a counter reaches zero.

    Without the owner's seed key the counterparty can only confirm that the
    revealed value closes the chain onto the accepted ``links[1]``.  When the
    key is available, the seed is also recomputed from the PRF.
    """
    if not chain_verify_step(link1, NextTok(0, Digest(bytes(tok0))), sid, peer_aid):
        return False
    if prf_key is not None:
        if owner_aid is None:
            raise ValueError("owner_aid required with prf_key")
        return ct_equal(prf(prf_key, sid, owner_aid, peer_aid, addr), tok0)
    return True


@dataclass
class ChainVerifier:
    """Counterparty view of a chain: the last accepted link and its position.

    ``remaining`` mirrors the counter: how many tokens are still unopened.
    """

    sid: bytes
    peer_aid: str
    head: Digest
    head_index: int

    @classmethod
    def from_first(cls, tok: NextTok, sid: bytes, peer_aid: str) -> "ChainVerifier":
        return cls(sid, peer_aid, tok.value, tok.index)

    @property
    def remaining(self) -> int:
        return self.head_index

    def accept(self, tok: NextTok) -> bool:
        if tok.index != self.head_index - 1 or tok.terminal is not None:
            return False
        if not chain_verify_step(self.head, tok, self.sid, self.peer_aid):
            return False
        self.head = tok.value
        self.head_index = tok.index
        return True

    def closed(self) -> bool:
        return self.head_index == 0
