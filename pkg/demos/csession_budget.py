"""Fan a task out to two responders under one global budget, statically and dynamically."""

from __future__ import annotations

from magiq.attacks import ALICE, BOB, CAROL, csession_scenario, run_conservation
from magiq.netsim import CSessionStep, World


def main() -> None:
    for mode in ("static", "dynamic"):
        w = World(csession_scenario(2, 3, [CSessionStep(ALICE, mode, [BOB, CAROL], 7, picks=2)]))
        w.setup()
        w.run_step(w.sc.steps[0])
        res = w.csessions[0]
        print(f"{mode}: global counter {res.ctr_global}/6, "
              f"bob ran {w.runtimes[BOB].executed}, carol ran {w.runtimes[CAROL].executed}")
    print("conservation runs:")
    for row in run_conservation():
        print("  " + row.csv())


if __name__ == "__main__":
    main()
