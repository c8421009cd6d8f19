"""Command-line entry points; every command writes CSV to stdout."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import time
from pathlib import Path

from . import models
from .attacks import matrix_csv, run_attack_matrix
from .bench import bench_csv, bench_primitives
from .netsim import load_scenario, measure_bandwidth, run_scenario

log = logging.getLogger("magiq")


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _str_list(text: str) -> list[str]:
    return [x for x in text.split(",") if x]


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    report = run_scenario(sc, seed=args.seed)
    rows = []
    for s in report.sessions:
        i, r = s.initiator_summary, s.responder_summary
        rows.append(("a-session", s.initiator, s.responder, s.executed,
                     i.cause if i else "", r.cause if r else "", s.error or ""))
    for c in report.csessions:
        rows.append((f"c-session-{c.mode}", c.orchestrator_aid, len(c.summaries), c.consumed,
                     f"{c.ctr_global}/{c.q_tot}", c.halted or "", ""))
    for e in report.aborts():
        rows.append(("reject", e.entity, e.accountable, e.tick, e.detail, e.sid, ""))
    sys.stdout.write(_write_csv(("kind", "a", "b", "count", "initiator", "responder", "error"),
                                rows))
    out = _out_dir(args)
    if out:
        report.write(out / f"{sc.name}.log")
        (out / f"{sc.name}.txt").write_text(report.summary())
    return 0


def cmd_attack_matrix(args) -> int:
    t0 = time.perf_counter()
    rows = []
    for q in args.q:
        rows.extend(run_attack_matrix(q, args.seed))
    text = matrix_csv(rows)
    sys.stdout.write(text)
    failed = [r for r in rows if not r.passed]
    log.info("%d rows, %d failed, %.2fs", len(rows), len(failed), time.perf_counter() - t0)
    out = _out_dir(args)
    if out:
        (out / "attack-matrix.csv").write_text(text)
    return 1 if failed else 0


def cmd_bench(args) -> int:
    rows = bench_primitives(args.iters)
    text = bench_csv(rows)
    sys.stdout.write(text)
    out = _out_dir(args)
    if out:
        (out / "bench.csv").write_text(text)
    by = {r.op: r for r in rows}
    # the hash-chain step must be cheaper than a hash-based signature
    return 0 if by["chain_step"].mean_us < by["sign"].mean_us else 1


def cmd_model(args) -> int:
    if args.model == "proto":
        if args.region_table:
            text = models.regional_proto_csv(args.m, args.q_max, provider_region=args.provider)
        else:
            text = models.proto_csv(args.m, args.q_max, args.rtt, args.t_crypto)
    elif args.model == "provider":
        text = models.provider_csv(args.n_agents, args.lifetime, args.t_crypto)
    elif args.model == "initiator":
        text = models.initiator_csv(args.t, args.lifetime)
    else:
        text = models.golden_csv()
    sys.stdout.write(text)
    out = _out_dir(args)
    if out:
        (out / f"model-{args.model}.csv").write_text(text)
    return 0


def cmd_bandwidth(args) -> int:
    sc = load_scenario(args.scenario)
    report = run_scenario(sc, seed=args.seed)
    bw = measure_bandwidth(report)
    text = _write_csv(("phase", "session", "bytes"), bw.rows())
    sys.stdout.write(text)
    out = _out_dir(args)
    if out:
        (out / f"{sc.name}-bandwidth.csv").write_text(text)
    ok = True
    for est, rounds in zip(bw.per_session_establishment, bw.per_request):
        if rounds and est < 10 * max(rounds):
            ok = False
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="magiq", description=__doc__)
    p.add_argument("--out", help="directory for logs and copies of the CSV output")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("attack-matrix", help="run the scripted adversary suite")
    a.add_argument("--q", type=_int_list, default=[1, 2, 3, 4, 5],
                   help="comma-separated session budgets (default 1,2,3,4,5)")
    a.add_argument("--seed", type=int, default=11)
    a.set_defaults(func=cmd_attack_matrix)

    b = sub.add_parser("bench", help="micro-benchmark the primitives")
    b.add_argument("--iters", type=int, default=100)
    b.set_defaults(func=cmd_bench)

    m = sub.add_parser("model", help="evaluate an overhead model")
    msub = m.add_subparsers(dest="model", required=True)
    mp = msub.add_parser("proto")
    mp.add_argument("--m", type=int, default=100)
    mp.add_argument("--q-max", type=_int_list, default=list(range(1, 21)))
    mp.add_argument("--rtt", type=models.exact, default=models.Fraction(0))
    mp.add_argument("--t-crypto", type=models.exact, default=models.T_CRYPTO_SESSION)
    mp.add_argument("--region-table", action="store_true",
                    help="sweep the bundled regional RTT table instead of --rtt")
    mp.add_argument("--provider", help="restrict the sweep to one provider region")
    mv = msub.add_parser("provider")
    mv.add_argument("--n-agents", type=_int_list, default=[100])
    mv.add_argument("--lifetime", type=_str_list, default=["1", "60", "480", "1440"])
    mv.add_argument("--t-crypto", type=models.exact, default=models.T_PROVIDER_RESOLVE)
    mi = msub.add_parser("initiator")
    mi.add_argument("--t", type=_int_list, default=[1, 2, 5, 10, 15])
    mi.add_argument("--lifetime", type=_str_list, default=["1", "60", "480", "1440"])
    msub.add_parser("golden", help="the regression-locked reference points")
    m.set_defaults(func=cmd_model)

    w = sub.add_parser("bandwidth", help="per-phase byte counts of a scenario run")
    w.add_argument("scenario")
    w.add_argument("--seed", type=int)
    w.set_defaults(func=cmd_bandwidth)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
