"""Closed-form overhead models evaluated with exact rational arithmetic.

Inputs may be ints, Fractions or decimal strings; floats are converted through
their shortest repr so that 20.33 means 2033/100 and not its binary neighbour.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from typing import Iterable

MINUTES_PER_DAY = 1440
# per-responder initiator costs in ms: contact resolution and handshake
T_RESOLVE_INIT = Fraction("4.1")
T_HANDSHAKE_INIT = Fraction("4.01")
T_PROVIDER_RESOLVE = Fraction("2.96")
T_CRYPTO_SESSION = Fraction("20.33")

Number = int | float | str | Fraction


def exact(x: Number) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class OverheadModelInput:
    m: int = 100
    q_max: int = 10
    rtt: Fraction = Fraction(0)
    t_crypto: Fraction = T_CRYPTO_SESSION
    n_agents: int = 100
    lifetime: Fraction = Fraction(MINUTES_PER_DAY)
    t: int = 1

    def __post_init__(self):
        if self.m < 1 or self.q_max < 1 or self.n_agents < 1 or self.t < 1:
            raise ValueError("counts must be positive")
        if self.rtt < 0 or self.t_crypto < 0:
            raise ValueError("times must be non-negative")
        if not 1 <= self.lifetime <= MINUTES_PER_DAY:
            raise ValueError("lifetime must lie in [1, 1440] minutes")


def model_proto_overhead(m: int, q_max: int, rtt: Number,
                         t_crypto: Number = T_CRYPTO_SESSION) -> tuple[Fraction, Fraction]:
    """Total and per-request ms for m requests under a per-session cap of q_max."""
    if m < 1 or q_max < 1:
        raise ValueError("m and q_max must be >= 1")
    cycles = math.ceil(Fraction(m, q_max))
    total = (exact(rtt) + exact(t_crypto)) * cycles
    return total, total / m


def model_provider_overhead(n_agents: int, lifetime: Number,
                            t_crypto: Number = T_PROVIDER_RESOLVE) -> Fraction:
    """Provider ms per day when n agents each resolve once per lifetime minutes."""
    ell = exact(lifetime)
    if not 1 <= ell <= MINUTES_PER_DAY:
        raise ValueError("lifetime must lie in [1, 1440] minutes")
    return n_agents * (MINUTES_PER_DAY / ell) * exact(t_crypto)


def initiator_session_cost(t: int) -> Fraction:
    if t < 1:
        raise ValueError("t must be >= 1")
    return T_RESOLVE_INIT * t + T_HANDSHAKE_INIT * t


def model_initiator_overhead(t: int, lifetime: Number) -> Fraction:
    """Orchestrator ms per day for t responders re-established every lifetime minutes."""
    ell = exact(lifetime)
    if not 1 <= ell <= MINUTES_PER_DAY:
        raise ValueError("lifetime must lie in [1, 1440] minutes")
    return initiator_session_cost(t) * (MINUTES_PER_DAY / ell)


def fmt(x: Fraction) -> str:
    """Stable decimal rendering: exact when the value terminates, else 9 places."""
    places = next((p for p in range(10) if (x * 10**p).denominator == 1), 9)
    q = round(x * 10**places)
    sign = "-" if q < 0 else ""
    whole, frac = divmod(abs(q), 10**places)
    return f"{sign}{whole}.{frac:0{places}d}" if places else f"{sign}{whole}"


# regional round-trip medians, ms; synthetic values editable in the bundled csv
def load_rtt_table(text: str | None = None) -> dict[tuple[str, str], Fraction]:
    if text is None:
        text = resources.files("magiq").joinpath("data/rtt_medians.csv").read_text()
    table = {}
    for row in csv.DictReader(io.StringIO(text)):
        a, b, v = row["src"], row["dst"], exact(row["rtt_ms"])
        table[(a, b)] = v
        table[(b, a)] = v
    return table


def rtt_between(a: str, b: str, table: dict | None = None) -> Fraction:
    table = table if table is not None else load_rtt_table()
    if a == b and (a, b) not in table:
        raise KeyError(f"no intra-region entry for {a}")
    return table[(a, b)]


def _csv(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, Fraction) else v for v in r])
    return buf.getvalue()


def proto_csv(m: int, q_values: Iterable[int], rtt: Number,
              t_crypto: Number = T_CRYPTO_SESSION) -> str:
    rows = []
    for q in q_values:
        total, amortized = model_proto_overhead(m, q, rtt, t_crypto)
        rows.append((m, q, exact(rtt), exact(t_crypto), total, amortized))
    return _csv(("m", "q_max", "rtt_ms", "t_crypto_ms", "total_ms", "amortized_ms"), rows)


def provider_csv(n_values: Iterable[int], lifetimes: Iterable[Number],
                 t_crypto: Number = T_PROVIDER_RESOLVE) -> str:
    lifetimes = list(lifetimes)
    rows = [(n, exact(ell), exact(t_crypto), model_provider_overhead(n, ell, t_crypto))
            for n in n_values for ell in lifetimes]
    return _csv(("n_agents", "lifetime_min", "t_crypto_ms", "ms_per_day"), rows)


def initiator_csv(t_values: Iterable[int], lifetimes: Iterable[Number]) -> str:
    lifetimes = list(lifetimes)
    rows = [(t, exact(ell), model_initiator_overhead(t, ell))
            for t in t_values for ell in lifetimes]
    return _csv(("t", "lifetime_min", "ms_per_day"), rows)


def regional_proto_csv(m: int, q_values: Iterable[int], table: dict | None = None,
                       provider_region: str | None = None,
                       t_crypto: Number = T_CRYPTO_SESSION) -> str:
    """Amortized overhead for each (agent region, provider region) pair in the table."""
    table = table if table is not None else load_rtt_table()
    q_values = list(q_values)
    regions = sorted({a for a, _ in table})
    rows = []
    for p in regions:
        if provider_region and p != provider_region:
            continue
        for a in regions:
            if (a, p) not in table:
                continue
            rtt = table[(a, p)]
            for q in q_values:
                total, amortized = model_proto_overhead(m, q, rtt, t_crypto)
                rows.append((a, p, q, rtt, total, amortized))
    return _csv(("agent_region", "provider_region", "q_max", "rtt_ms", "total_ms",
                 "amortized_ms"), rows)


def golden_csv() -> str:
    """The fixed reference points that are regression-locked in the test suite."""
    rows = []
    total, amortized = model_proto_overhead(100, 10, 0, "20.33")
    rows.append(("proto", "m=100 q_max=10 rtt=0 t_crypto=20.33", "total_ms", total))
    rows.append(("proto", "m=100 q_max=10 rtt=0 t_crypto=20.33", "amortized_ms", amortized))
    rows.append(("provider", "n=100 lifetime=1440 t_crypto=2.96", "ms_per_day",
                 model_provider_overhead(100, 1440, "2.96")))
    for t in (1, 2, 5, 10, 15):
        for ell in (1, 60, 480, 1440):
            rows.append(("initiator", f"t={t} lifetime={ell}", "ms_per_day",
                         model_initiator_overhead(t, ell)))
    return _csv(("model", "inputs", "quantity", "value"), rows)
