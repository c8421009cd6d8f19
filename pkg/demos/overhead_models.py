"""Print the closed-form overhead models for a few deployment sizes."""

from __future__ import annotations

from magiq.models import (fmt, model_initiator_overhead, model_provider_overhead,
                          model_proto_overhead, regional_proto_csv)


def main() -> None:
    for q in (1, 10, 100):
        total, per = model_proto_overhead(100, q, 0, "20.33")
        print(f"100 requests, session budget {q}: {fmt(total)} ms total, {fmt(per)} ms each")
    for n in (100, 1000, 10000):
        print(f"provider with {n} agents, daily keys: {fmt(model_provider_overhead(n, 1440, '2.96'))}"
              " ms/day")
    for t in (1, 5, 15):
        noun = "responder" if t == 1 else "responders"
        print(f"orchestrator with {t} {noun}, 1 min sessions: "
              f"{fmt(model_initiator_overhead(t, 1) / 1000)} s/day")
    print(regional_proto_csv(100, [10], provider_region="europe"), end="")


if __name__ == "__main__":
    main()
