"""Pluggable signature interface with a stateful hash-based reference scheme.

The reference scheme ``mss-lamport-sha256`` is a Merkle signature scheme: a
tree of height ``h`` over ``2**h`` Lamport leaf keys, used strictly in order.
Leaf secrets are derived from a 32-octet seed so only the seed, the tree and
the next leaf index are kept.  A signature carries the leaf index, the 256
revealed secrets, the 256 unrevealed public halves and the authentication
path, which together let the verifier rebuild the leaf and walk to the root.
"""

from __future__ import annotations

import hashlib
import secrets
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

from ..encoding import EncodingError, decode_exact, encode, to_int, to_str
from ..errors import KeyExhausted, UnknownScheme
from .hashing import DIGEST_SIZE, hash
from .lamport import BITS, digest_bits, pk_digest
from .merkle import MerkleProof, MerkleTree, merkle_build, merkle_prove, merkle_verify

MSS_LAMPORT = "mss-lamport-sha256"
DEFAULT_HEIGHT = 8
MAX_HEIGHT = 16

_sha = hashlib.sha256
_LEAF = struct.Struct(">I")
_INDEX = [i.to_bytes(2, "big") for i in range(BITS)]


@dataclass
class MSSSecret:
    seed: bytes
    height: int
    tree: MerkleTree
    next_index: int = 0


@dataclass
class SignatureKeyPair:
    secret: MSSSecret = field(repr=False)
    public: bytes = field(repr=False)
    scheme_id: str = MSS_LAMPORT

    @property
    def capacity(self) -> int:
        return 1 << self.secret.height

    @property
    def uses_remaining(self) -> int:
        return self.capacity - self.secret.next_index


def _leaf_secrets(seed: bytes, leaf: int) -> tuple[list[bytes], list[bytes]]:
    out = []
    for side in (b"\x00", b"\x01"):
        prefix = _sha(seed + _LEAF.pack(leaf) + side)
        row = []
        for suffix in _INDEX:
            h = prefix.copy()
            h.update(suffix)
            row.append(h.digest())
        out.append(row)
    return out[0], out[1]


def _leaf_public(seed: bytes, leaf: int) -> tuple[list[bytes], list[bytes]]:
    sk0, sk1 = _leaf_secrets(seed, leaf)
    return [_sha(x).digest() for x in sk0], [_sha(x).digest() for x in sk1]


@lru_cache(maxsize=1024)
def _leaf_keys(seed: bytes, leaf: int) -> tuple[list[bytes], list[bytes], list[bytes], list[bytes]]:
    # simulations rebuild identities from fixed seeds, so the same leaves sign again and again
    sk0, sk1 = _leaf_secrets(seed, leaf)
    pk0, pk1 = _leaf_public(seed, leaf)
    return sk0, sk1, pk0, pk1


@lru_cache(maxsize=512)
def _public_tree(seed: bytes, height: int) -> MerkleTree:
    # pure function of (seed, height); the tree is never mutated, so sharing it is safe
    leaves = []
    for leaf in range(1 << height):
        pk0, pk1 = _leaf_public(seed, leaf)
        leaves.append(pk_digest(b"".join(pk0), b"".join(pk1)))
    return merkle_build(leaves)


def encode_public(scheme_id: str, height: int, root: bytes) -> bytes:
    return encode(scheme_id, height, root)


def decode_public(pk: bytes) -> tuple[str, int, bytes]:
    scheme, height, root = decode_exact(pk, 3)
    return to_str(scheme), to_int(height), root


def sig_keygen(scheme_id: str = MSS_LAMPORT, height: int = DEFAULT_HEIGHT, *,
               seed: bytes | None = None,
               rng: Callable[[int], bytes] = secrets.token_bytes) -> SignatureKeyPair:
    if scheme_id != MSS_LAMPORT:
        raise UnknownScheme(f"unknown signature scheme {scheme_id!r}")
    if not 0 <= height <= MAX_HEIGHT:
        raise ValueError(f"height must be in [0, {MAX_HEIGHT}]")
    seed = seed if seed is not None else rng(32)
    tree = _public_tree(bytes(seed), height)
    return SignatureKeyPair(MSSSecret(seed, height, tree),
                            encode_public(scheme_id, height, tree.root), scheme_id)


def sig_sign(kp: SignatureKeyPair, message: bytes) -> bytes:
    if kp.scheme_id != MSS_LAMPORT:
        raise UnknownScheme(kp.scheme_id)
    st = kp.secret
    if st.next_index >= kp.capacity:
        raise KeyExhausted(f"all {kp.capacity} one-time leaves used")
    leaf = st.next_index
    st.next_index += 1  # advance before signing so a crash never reuses a leaf
    sk0, sk1, pk0, pk1 = _leaf_keys(bytes(st.seed), leaf)
    revealed = []
    other = []
    for i, b in enumerate(digest_bits(hash(message))):
        if b:
            revealed.append(sk1[i])
            other.append(pk0[i])
        else:
            revealed.append(sk0[i])
            other.append(pk1[i])
    proof = merkle_prove(st.tree, leaf)
    return encode(leaf, b"".join(revealed), b"".join(other), proof.encode())


def sig_verify(pk: bytes, message: bytes, signature: bytes) -> bool:
    return _verify(bytes(pk), bytes(message), bytes(signature))


@lru_cache(maxsize=4096)
def _verify(pk: bytes, message: bytes, signature: bytes) -> bool:
    # certificates and grants are re-checked often; the result depends only on the inputs
    try:
        scheme_id, height, root = decode_public(pk)
        if scheme_id != MSS_LAMPORT:
            return False
        leaf_b, revealed, other, proof_b = decode_exact(signature, 4)
        leaf = to_int(leaf_b)
        proof = MerkleProof.decode(proof_b)
    except (EncodingError, ValueError):
        return False
    size = BITS * DIGEST_SIZE
    if len(revealed) != size or len(other) != size:
        return False
    if proof.leaf_index != leaf or len(proof.siblings) != height:
        return False
    pk0 = []
    pk1 = []
    for i, b in enumerate(digest_bits(hash(message))):
        r = _sha(revealed[i * DIGEST_SIZE:(i + 1) * DIGEST_SIZE]).digest()
        o = other[i * DIGEST_SIZE:(i + 1) * DIGEST_SIZE]
        if b:
            pk0.append(o)
            pk1.append(r)
        else:
            pk0.append(r)
            pk1.append(o)
    leaf_pk = pk_digest(b"".join(pk0), b"".join(pk1))
    return merkle_verify(root, leaf_pk, proof)


def signature_size(height: int) -> int:
    """Octet length of a reference-scheme signature for a tree of ``height``."""
    proof = encode(0, [encode(b"\x00" * DIGEST_SIZE, 0)] * height)
    return len(encode(0, b"\x00" * BITS * DIGEST_SIZE, b"\x00" * BITS * DIGEST_SIZE, proof))
