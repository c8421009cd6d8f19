"""Regenerate crypto_vectors.json from the independent oracles only.

    python3 tests/fixtures/derive_vectors.py > tests/fixtures/crypto_vectors.json
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

import oracles  # noqa: E402

CHAINS = [
    ("0b" * 32, "11" * 32, "alice@a.org:ai", "bob@b.org:sched", 0, 1),
    ("0b" * 32, "11" * 32, "alice@a.org:ai", "bob@b.org:sched", 0, 5),
    ("0b" * 32, "11" * 32, "alice@a.org:ai", "bob@b.org:sched", 1, 5),
    ("0b" * 32, "22" * 32, "alice@a.org:ai", "bob@b.org:sched", 0, 5),
    ("0b" * 32, "11" * 32, "alice@a.org:ai", "carol@c.org:bot", 0, 5),
    ("5a" * 16, "00" * 32, "bob@b.org:sched", "alice@a.org:ai", 3, 10),
]


def merkle_leaves(k: int) -> list[bytes]:
    return [oracles.sha256(b"leaf" + i.to_bytes(2, "big")) for i in range(k)]


def main() -> None:
    out = {"chains": [], "merkle": [], "mss": []}
    for key, sid, me, peer, addr, n in CHAINS:
        links = oracles.chain_links(bytes.fromhex(key), bytes.fromhex(sid), me, peer, addr, n)
        out["chains"].append({"key": key, "sid": sid, "self_aid": me, "peer_aid": peer,
                              "addr": addr, "n": n, "links": [x.hex() for x in links]})
    for k in range(1, 17):
        leaves = merkle_leaves(k)
        out["merkle"].append({"leaves": [x.hex() for x in leaves],
                              "root": oracles.merkle_root(leaves).hex()})
    for seed in ("07" * 32, "a5" * 32):
        leaves = [oracles.mss_leaf_digest(bytes.fromhex(seed), i) for i in range(2)]
        out["mss"].append({"seed": seed, "height": 1, "leaf_digests": [x.hex() for x in leaves],
                           "root": oracles.merkle_root(leaves).hex()})
    json.dump(out, sys.stdout, indent=1)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
