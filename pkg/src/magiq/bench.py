"""Micro-benchmarks of the primitives on the hot paths.

Timings are wall-clock measurements on the local machine, reported in
microseconds with a note column flagging them as measured data.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from dataclasses import dataclass
from typing import Callable

from .crypto.chain import chain_build, link_hash
from .crypto.hashing import hmac
from .crypto.merkle import merkle_build, merkle_prove, merkle_verify
from .crypto.signatures import _verify, sig_keygen, sig_sign

NOTE = "measured"
MERKLE_LEAVES = 64
CHAIN_LEN = 10


@dataclass(frozen=True)
class BenchRow:
    op: str
    mean_us: float
    p99_us: float
    note: str = NOTE


def _p99(samples: list[float]) -> float:
    s = sorted(samples)
    return s[min(len(s) - 1, math.ceil(0.99 * len(s)) - 1)]


def _time(fn: Callable[[int], object], iters: int) -> tuple[float, float]:
    samples = []
    for i in range(iters):
        t0 = time.perf_counter_ns()
        fn(i)
        samples.append((time.perf_counter_ns() - t0) / 1000)
    return statistics.fmean(samples), _p99(samples)


def bench_primitives(iterations: int = 100, *, seed: bytes = b"\x07" * 32) -> list[BenchRow]:
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    sid = b"\x11" * 32
    key = b"\x22" * 32
    prev = b"\x33" * 32
    msgs = [f"bench message {i}".encode() for i in range(iterations)]
    leaves = [i.to_bytes(32, "big") for i in range(MERKLE_LEAVES)]
    tree = merkle_build(leaves)
    proofs = [merkle_prove(tree, i % MERKLE_LEAVES) for i in range(iterations)]

    # one key per 2**height signatures; keygen is outside the timed region
    height = min(10, max(4, math.ceil(math.log2(iterations))))
    keys = [sig_keygen(height=height, seed=bytes([k]) + seed[1:])
            for k in range(math.ceil(iterations / (1 << height)))]
    sigs: list[bytes] = [b""] * iterations

    def sign(i):
        sigs[i] = sig_sign(keys[i >> height], msgs[i])

    rows = []
    ops: list[tuple[str, Callable[[int], object]]] = [
        ("chain_step", lambda i: link_hash(prev, i + 1, sid, "bob@b.org:sched")),
        (f"chain_build_n{CHAIN_LEN}",
         lambda i: chain_build(key, sid, "alice@a.org:ai", "bob@b.org:sched", i, CHAIN_LEN)),
        ("hmac", lambda i: hmac(key, msgs[i])),
        ("sign", sign),
        # bypass the verification memo so every call does the full work
        ("verify", lambda i: _verify.__wrapped__(keys[i >> height].public, msgs[i], sigs[i])),
        (f"merkle_build_{MERKLE_LEAVES}", lambda i: merkle_build(leaves)),
        ("merkle_prove", lambda i: merkle_prove(tree, i % MERKLE_LEAVES)),
        ("merkle_verify", lambda i: merkle_verify(tree.root, leaves[i % MERKLE_LEAVES],
                                                  proofs[i])),
    ]
    for name, fn in ops:
        mean, p99 = _time(fn, iterations)
        rows.append(BenchRow(name, mean, p99))
    return rows


def bench_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("op", "mean_us", "p99_us", "note"))
    for r in rows:
        w.writerow((r.op, f"{r.mean_us:.3f}", f"{r.p99_us:.3f}", r.note))
    return buf.getvalue()
