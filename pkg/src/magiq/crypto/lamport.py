"""Lamport one-time signatures over SHA-256 message digests."""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass, field
from typing import Callable

from ..encoding import EncodingError, encode
from ..errors import KeyReuse
from .hashing import DIGEST_SIZE, Digest, ct_equal, hash

BITS = 256
_sha = hashlib.sha256


def digest_bits(d: bytes) -> list[int]:
    return [(d[i >> 3] >> (7 - (i & 7))) & 1 for i in range(BITS)]


@dataclass(frozen=True)
class OTSPublicKey:
    zeros: tuple[bytes, ...]
    ones: tuple[bytes, ...]

    def to_bytes(self) -> bytes:
        return b"".join(self.zeros) + b"".join(self.ones)

    @classmethod
    def from_bytes(cls, data: bytes) -> "OTSPublicKey":
        if len(data) != 2 * BITS * DIGEST_SIZE:
            raise EncodingError("Lamport public key must be 16384 octets")
        parts = [data[i:i + DIGEST_SIZE] for i in range(0, len(data), DIGEST_SIZE)]
        return cls(tuple(parts[:BITS]), tuple(parts[BITS:]))

    def digest(self) -> Digest:
        """Compressed form used as a Merkle leaf."""
        return pk_digest(b"".join(self.zeros), b"".join(self.ones))


def pk_digest(zeros: bytes, ones: bytes) -> Digest:
    return hash(encode(zeros, ones))


@dataclass
class OTSKeyPair:
    secret: tuple[tuple[bytes, ...], tuple[bytes, ...]] = field(repr=False)
    public: OTSPublicKey = field(repr=False)
    used: bool = False


def ots_keygen(rng: Callable[[int], bytes] = secrets.token_bytes) -> OTSKeyPair:
    sk0 = tuple(rng(DIGEST_SIZE) for _ in range(BITS))
    sk1 = tuple(rng(DIGEST_SIZE) for _ in range(BITS))
    pk = OTSPublicKey(tuple(_sha(x).digest() for x in sk0),
                      tuple(_sha(x).digest() for x in sk1))
    return OTSKeyPair((sk0, sk1), pk)


def sign_digest(sk0, sk1, d: bytes) -> tuple[bytes, ...]:
    return tuple(sk1[i] if b else sk0[i] for i, b in enumerate(digest_bits(d)))


def ots_sign(kp: OTSKeyPair, message: bytes) -> bytes:
    if kp.used:
        raise KeyReuse("Lamport key pair already signed a message")
    kp.used = True
    return b"".join(sign_digest(kp.secret[0], kp.secret[1], hash(message)))


def ots_verify(pk: OTSPublicKey, message: bytes, signature: bytes) -> bool:
    if len(signature) != BITS * DIGEST_SIZE:
        return False
    d = hash(message)
    ok = True
    for i, b in enumerate(digest_bits(d)):
        chunk = signature[i * DIGEST_SIZE:(i + 1) * DIGEST_SIZE]
        expected = pk.ones[i] if b else pk.zeros[i]
        ok &= ct_equal(_sha(chunk).digest(), expected)
    return bool(ok)
