"""Independent reference computations used to derive and check frozen values.

Nothing here imports the library.  SHA-256 is written out from the FIPS 180-4
round function, HMAC from its ipad/opad definition, and the chain and Merkle
computations are brute-force restatements of the construction.
"""

from __future__ import annotations

import struct

_K = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
]
_H0 = [0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19]
_M = 0xFFFFFFFF


def _rotr(x: int, n: int) -> int:
    return ((x >> n) | (x << (32 - n))) & _M


def sha256(data: bytes) -> bytes:
    msg = bytes(data) + b"\x80"
    msg += b"\x00" * ((56 - len(msg) % 64) % 64)
    msg += struct.pack(">Q", 8 * len(data))
    h = list(_H0)
    for off in range(0, len(msg), 64):
        w = list(struct.unpack(">16I", msg[off:off + 64]))
        for t in range(16, 64):
            s0 = _rotr(w[t - 15], 7) ^ _rotr(w[t - 15], 18) ^ (w[t - 15] >> 3)
            s1 = _rotr(w[t - 2], 17) ^ _rotr(w[t - 2], 19) ^ (w[t - 2] >> 10)
            w.append((w[t - 16] + s0 + w[t - 7] + s1) & _M)
        a, b, c, d, e, f, g, hh = h
        for t in range(64):
            t1 = (hh + (_rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25))
                  + ((e & f) ^ (~e & g)) + _K[t] + w[t]) & _M
            t2 = ((_rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)) + ((a & b) ^ (a & c) ^ (b & c))) & _M
            a, b, c, d, e, f, g, hh = (t1 + t2) & _M, a, b, c, (d + t1) & _M, e, f, g
        h = [(x + y) & _M for x, y in zip(h, (a, b, c, d, e, f, g, hh))]
    return struct.pack(">8I", *h)


def hmac_sha256(key: bytes, msg: bytes) -> bytes:
    if len(key) > 64:
        key = sha256(key)
    key = key.ljust(64, b"\x00")
    inner = sha256(bytes(k ^ 0x36 for k in key) + msg)
    return sha256(bytes(k ^ 0x5C for k in key) + inner)


def enc(*fields) -> bytes:
    """Length-prefixed concatenation: u32 length then the field octets."""
    out = b""
    for f in fields:
        if f is None:
            raw = b""
        elif isinstance(f, int):
            raw = f.to_bytes(8, "big")
        elif isinstance(f, str):
            raw = f.encode()
        elif isinstance(f, (list, tuple)):
            raw = enc(*f)
        else:
            raw = bytes(f)
        out += len(raw).to_bytes(4, "big") + raw
    return out


def chain_links(key: bytes, sid: bytes, self_aid: str, peer_aid: str, addr: int,
                n: int) -> list[bytes]:
    """All n+1 links: the PRF seed then link j = H(enc(prev, j, sid, peer))."""
    links = [hmac_sha256(key, enc(sid, self_aid, peer_aid, addr))]
    for j in range(1, n + 1):
        links.append(sha256(enc(links[-1], j, sid, peer_aid)))
    return links


def merkle_root(leaves: list[bytes]) -> bytes:
    """Root by recursion over the padded level list (odd levels repeat their last node)."""
    def up(level: list[bytes]) -> bytes:
        if len(level) == 1:
            return level[0]
        if len(level) % 2:
            level = level + [level[-1]]
        return up([sha256(b"\x01" + level[i] + level[i + 1]) for i in range(0, len(level), 2)])

    return up([sha256(b"\x00" + x) for x in leaves])


def mss_leaf_digest(seed: bytes, leaf: int) -> bytes:
    """Compressed Lamport public key of one leaf of the reference signature tree."""
    zeros = b"".join(sha256(sha256(seed + leaf.to_bytes(4, "big") + b"\x00" + i.to_bytes(2, "big")))
                     for i in range(256))
    ones = b"".join(sha256(sha256(seed + leaf.to_bytes(4, "big") + b"\x01" + i.to_bytes(2, "big")))
                    for i in range(256))
    return sha256(enc(zeros, ones))
