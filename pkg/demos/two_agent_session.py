"""Open one metered session between two agents and print what each side saw."""

from __future__ import annotations

from pathlib import Path

from magiq.netsim import load_scenario, measure_bandwidth, run_scenario

SCENARIO = Path(__file__).resolve().parents[1] / "scenarios" / "honest-2agent.scn"


def main() -> None:
    report = run_scenario(load_scenario(SCENARIO))
    print(report.summary())
    for m in report.messages:
        print(f"  #{m.idx:02d} {m.src} -> {m.dst} tag=0x{m.tag:02x} {len(m.data)} B {m.fate}")
    bw = measure_bandwidth(report)
    print(f"establishment {bw.per_session_establishment[0]} B, "
          f"each later round {bw.per_request[0][0]} B")


if __name__ == "__main__":
    main()
