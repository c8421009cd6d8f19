from __future__ import annotations

import random
from dataclasses import dataclass

import pytest

from magiq.asession import NonceRegistry, SessionState, handle_response, initiate, respond
from magiq.attacks import ALICE, BOB, CAROL, base_scenario
from magiq.netsim import World


CRITERIA: dict[int, str] = {}


def record_criterion(n: int, ok: bool, detail: str) -> None:
    CRITERIA[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    print(CRITERIA[n])


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])


def make_world(q: int = 3, *, seed: int = 11, corrupt=()) -> World:
    w = World(base_scenario(q, seed=seed, corrupt=corrupt, steps=[]))
    w.setup()
    return w


@pytest.fixture
def world() -> World:
    return make_world()


@dataclass
class Pair:
    """An A-session opened by calling the protocol functions directly."""

    world: World
    init: SessionState
    resp: SessionState
    m0: object
    m1: object
    seen_ots: set
    nonces: NonceRegistry

    @property
    def clock(self):
        return self.world.clock


def open_pair(w: World, q: int = 3, delta: int = 20, *, payload: bytes = b"req1",
              initiator: str = ALICE, responder: str = BOB, rcp=None, accept=True) -> Pair:
    a = w.runtimes[initiator].agent
    b = w.runtimes[responder].agent
    auth = w.provider.discover(a.aid, b.aid)
    m0, st_i = initiate(a, auth, q, delta, w.clock, task_digest=b"task", payload=payload,
                        rng=w.rng)
    nonces = NonceRegistry()
    seen: set = set()
    m1, st_r = respond(b, m0, rcp, w.clock, w.anchors, nonces, rng=w.rng, seen_ots=seen)
    if accept:
        handle_response(st_i, m1, w.clock)
    return Pair(w, st_i, st_r, m0, m1, seen, nonces)


@pytest.fixture
def pair(world) -> Pair:
    return open_pair(world)


@pytest.fixture
def rng():
    return random.Random(5).randbytes


__all__ = ["ALICE", "BOB", "CAROL", "make_world", "open_pair"]
