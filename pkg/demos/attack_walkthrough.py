"""Replay and mutate traffic in a three-round session and show who gets blamed."""

from __future__ import annotations

from magiq.asession import TASK_REQ
from magiq.attacks import ALICE, BOB, base_scenario, run_attack_matrix
from magiq.netsim import Action, run_scenario


def blame(report) -> list[str]:
    return [f"{e.entity} refused: {e.detail} (accountable: {e.accountable})"
            for e in report.events if e.accountable]


def main() -> None:
    honest = run_scenario(base_scenario(3))
    idx = next(m.idx for m in honest.messages if m.tag == TASK_REQ)

    replayed = run_scenario(base_scenario(3, adversary={idx: [Action("replay", k=idx)]}))
    print("replayed request:", blame(replayed) or "nothing accountable")

    tampered = run_scenario(base_scenario(
        3, corrupt={ALICE}, adversary={idx: [Action("mutate", path=(1,), data=b"evil")]}))
    print("corrupted initiator rewrites its payload:", blame(tampered))

    rows = run_attack_matrix(3)
    print(f"full matrix: {sum(r.passed for r in rows)}/{len(rows)} rows behave as expected")
    for r in rows:
        if r.category != "mutation":
            print("  " + r.csv())
    print(f"({BOB} executed {honest.sessions[0].executed} requests in the honest run)")


if __name__ == "__main__":
    main()
