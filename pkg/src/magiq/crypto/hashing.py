from __future__ import annotations

import hashlib
import hmac as _hmac

from ..encoding import encode
from ..errors import EmptyKey

DIGEST_SIZE = 32


class Digest(bytes):
    """A 32-octet SHA-256 output."""

    def __new__(cls, value: bytes = b""):
        if len(value) != DIGEST_SIZE:
            raise ValueError(f"digest must be {DIGEST_SIZE} octets, got {len(value)}")
        return super().__new__(cls, value)

    def __repr__(self) -> str:
        return f"Digest({self.hex()[:16]}…)"


def hash(data: bytes) -> Digest:  # noqa: A001 - mirrors the protocol's H
    return Digest(hashlib.sha256(data).digest())


def hash_fields(*fields) -> Digest:
    """H(a, b, c, …) over the canonical encoding of the fields."""
    return Digest(hashlib.sha256(encode(*fields)).digest())


def hmac(key: bytes, message: bytes) -> Digest:
    if not key:
        raise EmptyKey("HMAC key must be non-empty")
    return Digest(_hmac.new(key, message, hashlib.sha256).digest())


def hmac_verify(key: bytes, message: bytes, tag: bytes) -> bool:
    if not key:
        raise EmptyKey("HMAC key must be non-empty")
    expected = _hmac.new(key, message, hashlib.sha256).digest()
    return _hmac.compare_digest(expected, bytes(tag))


def prf(key: bytes, sid: bytes, aid_a: str, aid_b: str, addr: int) -> Digest:
    """Chain-seed PRF: HMAC-SHA256 keyed by the agent's chain-seed key."""
    return hmac(key, encode(sid, aid_a, aid_b, addr))


def ct_equal(a: bytes, b: bytes) -> bool:
    return _hmac.compare_digest(bytes(a), bytes(b))
